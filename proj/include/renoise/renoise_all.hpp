#pragma once

// Umbrella header.
#include "renoise/budget.hpp"
#include "renoise/diagnostics.hpp"
#include "renoise/io.hpp"
#include "renoise/latent.hpp"
#include "renoise/predictors.hpp"
#include "renoise/regularize.hpp"
#include "renoise/renoise.hpp"
#include "renoise/rng.hpp"
#include "renoise/sampler.hpp"
#include "renoise/schedule.hpp"
