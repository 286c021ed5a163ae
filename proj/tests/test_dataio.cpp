#include "test_support.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "renkit/dataio.hpp"
#include "renkit/probe.hpp"

using namespace renkit;
using namespace testsupport;
using Catch::Approx;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("renkit_test_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

Ren certified_ren(Rng& rng, Index n = 2, Index q = 3, Index m = 1, Index p = 1) {
  return direct_parameterize_ren(random_ren_params(n, q, m, p, rng));
}

}  // namespace

TEST_CASE("timeseries CSV round trip") {
  TempDir dir;
  SECTION("handwritten three-row file") {
    const std::string path = dir.file("hand.csv");
    std::ofstream(path) << "t,u_1,y_1\n0,0.5,1\n1,-0.25,2\n2,0,3\n";
    const auto data = load_timeseries(path);
    CHECK(data.T() == 3);
    CHECK(data.u(1, 0) == -0.25);
    CHECK(data.y(2, 0) == 3.0);
  }
  SECTION("missing cell names the row") {
    const std::string path = dir.file("ragged.csv");
    std::ofstream(path) << "t,u_1,y_1\n0,0.5,1\n1,0.25\n";
    try {
      load_timeseries(path);
      FAIL("expected IoError");
    } catch (const IoError& err) {
      CHECK(std::string(err.what()).find("row 1") != std::string::npos);
    }
  }
  SECTION("malformed header is rejected") {
    const std::string path = dir.file("badheader.csv");
    std::ofstream(path) << "t,u_1,z_1\n0,1,2\n";
    CHECK_THROWS_AS(load_timeseries(path), IoError);
  }
  SECTION("non-finite values are rejected") {
    const std::string path = dir.file("inf.csv");
    std::ofstream(path) << "t,u_1,y_1\n0,inf,2\n";
    CHECK_THROWS_AS(load_timeseries(path), IoError);
  }
  SECTION("random dataset round-trips bit exactly") {
    Rng rng(269);
    TimeSeriesDataset data;
    data.u = rng.gaussian(37, 2);
    data.y = rng.gaussian(37, 3);
    const std::string path = dir.file("round.csv");
    save_timeseries(data, path);
    const auto back = load_timeseries(path);
    CHECK((back.u - data.u).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.y - data.y).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("model files round trip with certificate re-verification") {
  TempDir dir;
  Rng rng(271);

  SECTION("certified REN") {
    const Ren m = certified_ren(rng);
    REQUIRE(check_contracting_ren(m, 0.0).feasible);
    ModelFileData data;
    data.model = m;
    data.margin = 0.0;
    data.metadata["note"] = "fixture";
    const std::string path = dir.file("ren.json");
    save_model(data, path);
    const auto back = load_model(path);
    const auto& mb = std::get<Ren>(back.model);
    CHECK((mb.E - m.E).cwiseAbs().maxCoeff() == 0.0);
    CHECK((mb.D11tilde - m.D11tilde).cwiseAbs().maxCoeff() == 0.0);
    CHECK((mb.P - m.P).cwiseAbs().maxCoeff() == 0.0);
    CHECK((mb.Lambda - m.Lambda).cwiseAbs().maxCoeff() == 0.0);
    CHECK(back.margin == 0.0);
    CHECK(back.metadata.at("note") == "fixture");
    CHECK(check_contracting_ren(mb, 0.0).feasible);
  }

  SECTION("tampered P is rejected on load") {
    const Ren m = certified_ren(rng);
    ModelFileData data;
    data.model = m;
    data.margin = 0.0;
    const std::string path = dir.file("tampered.json");
    save_model(data, path);
    // Flip the sign of P[0][0] in the JSON text.
    auto j = Json::parse(std::ifstream(path));
    j["certificates"]["P"][0][0] = -j["certificates"]["P"][0][0].get<double>();
    std::ofstream(path) << j.dump(2);
    CHECK_THROWS_AS(load_model(path), IoError);
  }

  SECTION("unknown family string") {
    const std::string path = dir.file("family.json");
    std::ofstream(path) << R"({"schema_version":"1","family":"mystery"})";
    CHECK_THROWS_AS(load_model(path), IoError);
  }

  SECTION("schema version mismatch") {
    const std::string path = dir.file("schema.json");
    std::ofstream(path) << R"({"schema_version":"7","family":"ren"})";
    CHECK_THROWS_AS(load_model(path), IoError);
  }

  SECTION("dimension mismatch between dims and arrays") {
    const Ren m = certified_ren(rng);
    ModelFileData data;
    data.model = m;
    const std::string path = dir.file("dims.json");
    save_model(data, path);
    auto j = Json::parse(std::ifstream(path));
    j["dims"]["n"] = 5;
    std::ofstream(path) << j.dump(2);
    CHECK_THROWS_AS(load_model(path), IoError);
  }

  SECTION("implicit LTI and explicit LTI round trip") {
    const auto lti = random_stable_lti(3, 2, 1, rng);
    ModelFileData data;
    data.model = lti;
    data.margin = 0.0;
    const std::string path = dir.file("lti.json");
    save_model(data, path);
    const auto back = load_model(path);
    const auto& lb = std::get<ImplicitLti>(back.model);
    CHECK((lb.E - lti.E).cwiseAbs().maxCoeff() == 0.0);

    const auto exp = to_explicit(lti);
    ModelFileData edata;
    edata.model = exp;
    edata.explicit_P = solve_discrete_lyapunov(exp.A, Matrix::Identity(3, 3));
    edata.margin = 0.0;
    const std::string epath = dir.file("explicit.json");
    save_model(edata, epath);
    const auto eback = load_model(epath);
    CHECK(std::get<ExplicitLti>(eback.model).A.isApprox(exp.A, 0.0));
  }

  SECTION("false gamma claim is rejected") {
    Rng local(277);
    LbenDirectParams params{DirectFactor::random(3, 1e-2, local), local.gaussian_vector(3, 0.3),
                            local.gaussian(1, 3, 0.5), local.gaussian(3, 2, 0.5),
                            Activation::relu};
    const auto net = direct_parameterize_lben(params, 1.0);
    ModelFileData data;
    data.model = net;
    data.margin = 0.0;
    data.gamma = 1e-6;  // far below anything certifiable
    const std::string path = dir.file("badgamma.json");
    save_model(data, path);
    CHECK_THROWS_AS(load_model(path), IoError);
  }
}

TEST_CASE("feedforward weight files") {
  TempDir dir;
  Rng rng(281);
  FeedforwardSpec spec;
  spec.act = Activation::tanh;
  spec.layers.push_back({rng.gaussian(3, 2), rng.gaussian_vector(3)});
  spec.layers.push_back({rng.gaussian(2, 3), rng.gaussian_vector(2)});
  spec.layers.push_back({rng.gaussian(1, 2), rng.gaussian_vector(1)});
  const std::string path = dir.file("ff.json");
  save_feedforward(spec, path);
  const auto back = load_feedforward(path);
  REQUIRE(back.layers.size() == 3);
  for (std::size_t l = 0; l < 3; ++l) {
    CHECK((back.layers[l].W - spec.layers[l].W).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.layers[l].b - spec.layers[l].b).cwiseAbs().maxCoeff() == 0.0);
  }
  SECTION("broken chain is rejected") {
    auto j = Json::parse(std::ifstream(path));
    j["layers"][1]["W"] = Json::array({Json::array({1.0, 2.0, 3.0, 4.0})});
    const std::string bad = dir.file("ffbad.json");
    std::ofstream(bad) << j.dump(2);
    CHECK_THROWS_AS(load_feedforward(bad), IoError);
  }
}

TEST_CASE("synthetic generation") {
  SECTION("bit-exact reproducibility from the seed") {
    SyntheticSpec spec;
    spec.T = 64;
    spec.seed = 99;
    const auto a = generate_synthetic(spec);
    const auto b = generate_synthetic(spec);
    CHECK((a.u - b.u).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.y - b.y).cwiseAbs().maxCoeff() == 0.0);
  }
  SECTION("generator spectral radius stays below one across seeds") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      SyntheticSpec spec;
      spec.T = 4;
      spec.seed = seed;
      const auto [data, gen] = generate_synthetic_with_model(spec);
      CHECK(spectral_radius(to_explicit(gen).A) < 1.0);
    }
  }
  SECTION("single-sample dataset is accepted downstream") {
    SyntheticSpec spec;
    spec.T = 1;
    const auto data = generate_synthetic(spec);
    CHECK(data.T() == 1);
    data.validate();
  }
  SECTION("noise and nonlinearity options change the output") {
    SyntheticSpec spec;
    spec.T = 32;
    spec.seed = 5;
    const auto clean = generate_synthetic(spec);
    spec.noise_std = 0.1;
    const auto noisy = generate_synthetic(spec);
    CHECK((clean.y - noisy.y).cwiseAbs().maxCoeff() > 0.0);
    CHECK((clean.u - noisy.u).cwiseAbs().maxCoeff() == 0.0);

    SyntheticSpec tanh_spec;
    tanh_spec.T = 32;
    tanh_spec.seed = 5;
    tanh_spec.kind = SyntheticKind::lti_plus_static_nonlinearity;
    const auto squashed = generate_synthetic(tanh_spec);
    CHECK(squashed.y.cwiseAbs().maxCoeff() <= 1.0);
  }
  SECTION("multisine input is bounded and periodic-looking") {
    SyntheticSpec spec;
    spec.T = 128;
    spec.input = InputKind::multisine;
    spec.seed = 11;
    const auto data = generate_synthetic(spec);
    CHECK(data.u.cwiseAbs().maxCoeff() <= 8.0 / std::sqrt(8.0) + 1e-9);
  }
}
