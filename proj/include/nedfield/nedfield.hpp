#pragma once

#include "bounds.hpp"
#include "config.hpp"
#include "csv.hpp"
#include "estimators.hpp"
#include "experiments.hpp"
#include "fields.hpp"
#include "geometry.hpp"
#include "kernels.hpp"
#include "rng.hpp"
#include "stats.hpp"
