#pragma once

// Umbrella header.

#include "csm/common.hpp"
#include "csm/config.hpp"
#include "csm/data_io.hpp"
#include "csm/dynamics.hpp"
#include "csm/harness.hpp"
#include "csm/learning.hpp"
#include "csm/linear_ssm.hpp"
#include "csm/network.hpp"
#include "csm/structured.hpp"
#include "csm/synth_data.hpp"
#include "csm/verify.hpp"
