#pragma once

// Umbrella header for the whole quality-index toolkit.

#include "qi/aggd.hpp"
#include "qi/baselines.hpp"
#include "qi/clustering.hpp"
#include "qi/directional.hpp"
#include "qi/harness.hpp"
#include "qi/image.hpp"
#include "qi/image_io.hpp"
#include "qi/mscn.hpp"
#include "qi/preprocess.hpp"
#include "qi/quality.hpp"
#include "qi/rng.hpp"
#include "qi/serialize.hpp"
#include "qi/stats.hpp"
