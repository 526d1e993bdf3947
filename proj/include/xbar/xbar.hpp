#pragma once

#include "xbar/calibrate.hpp"
#include "xbar/circuit.hpp"
#include "xbar/config.hpp"
#include "xbar/device.hpp"
#include "xbar/dse.hpp"
#include "xbar/surrogate.hpp"
#include "xbar/testbench.hpp"
#include "xbar/workspace.hpp"
