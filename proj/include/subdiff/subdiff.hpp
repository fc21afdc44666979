#pragma once

#include "subdiff/algorithms.hpp"
#include "subdiff/combiner.hpp"
#include "subdiff/errors.hpp"
#include "subdiff/harness.hpp"
#include "subdiff/netgraph.hpp"
#include "subdiff/predictor.hpp"
#include "subdiff/problem.hpp"
#include "subdiff/rng.hpp"
#include "subdiff/version.hpp"
