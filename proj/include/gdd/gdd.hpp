#pragma once

#include "gdd/autodiff.hpp"
#include "gdd/degradation.hpp"
#include "gdd/gradcheck.hpp"
#include "gdd/io.hpp"
#include "gdd/losses.hpp"
#include "gdd/metrics.hpp"
#include "gdd/network.hpp"
#include "gdd/nn_ops.hpp"
#include "gdd/optim.hpp"
#include "gdd/rng.hpp"
#include "gdd/runner.hpp"
#include "gdd/tensor.hpp"
#include "gdd/trace.hpp"
