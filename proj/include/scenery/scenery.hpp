#pragma once

#include "scenery/common.hpp"
#include "scenery/rng.hpp"
#include "scenery/cell.hpp"
#include "scenery/tree.hpp"
#include "scenery/rebin.hpp"
#include "scenery/maps.hpp"
#include "scenery/parallel.hpp"
#include "scenery/source.hpp"
#include "scenery/operators.hpp"
#include "scenery/distribution.hpp"
#include "scenery/dynamics.hpp"
#include "scenery/dimension.hpp"
#include "scenery/geometry.hpp"
#include "scenery/constructions.hpp"
#include "scenery/serialize.hpp"
