#pragma once

// Umbrella header for the toolkit (everything except the CLI front end,
// which lives in aput/cli.hpp).

#include "aput/a2c.hpp"
#include "aput/belief.hpp"
#include "aput/dp.hpp"
#include "aput/env.hpp"
#include "aput/errors.hpp"
#include "aput/harness.hpp"
#include "aput/mi.hpp"
#include "aput/model.hpp"
#include "aput/nn.hpp"
#include "aput/random.hpp"
