#pragma once

// Umbrella header for the toolkit: stable LTI models, contracting and
// robust recurrent networks, equilibrium networks and RENs, together
// with certificate checks, direct parameterizations, simulation-error
// fitting, empirical probes and file I/O.

#include "renkit/activation.hpp"
#include "renkit/certkit.hpp"
#include "renkit/common.hpp"
#include "renkit/dataio.hpp"
#include "renkit/eqnet.hpp"
#include "renkit/grad.hpp"
#include "renkit/lti.hpp"
#include "renkit/probe.hpp"
#include "renkit/ren.hpp"
#include "renkit/rng.hpp"
#include "renkit/rnn.hpp"
#include "renkit/simfit.hpp"
