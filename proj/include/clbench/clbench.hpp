#pragma once

// Umbrella header.

#include "clbench/audit.hpp"
#include "clbench/checkpoint.hpp"
#include "clbench/config.hpp"
#include "clbench/data.hpp"
#include "clbench/error.hpp"
#include "clbench/hat.hpp"
#include "clbench/icarl.hpp"
#include "clbench/metrics.hpp"
#include "clbench/nn.hpp"
#include "clbench/protocols.hpp"
#include "clbench/regularization.hpp"
#include "clbench/replay.hpp"
#include "clbench/report.hpp"
#include "clbench/scenarios.hpp"
#include "clbench/strategy.hpp"
#include "clbench/util.hpp"
