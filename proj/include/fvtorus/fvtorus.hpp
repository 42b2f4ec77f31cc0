#pragma once

#include "fvtorus/config.hpp"
#include "fvtorus/coupling.hpp"
#include "fvtorus/csv.hpp"
#include "fvtorus/experiments.hpp"
#include "fvtorus/geometry.hpp"
#include "fvtorus/gridref.hpp"
#include "fvtorus/kernel.hpp"
#include "fvtorus/measure.hpp"
#include "fvtorus/model.hpp"
#include "fvtorus/parallel.hpp"
#include "fvtorus/particles.hpp"
#include "fvtorus/rng.hpp"
#include "fvtorus/selfcheck.hpp"
#include "fvtorus/stats.hpp"
#include "fvtorus/transport.hpp"
#include "fvtorus/version.hpp"
