#pragma once

// Umbrella header for the RoIFusion library.

#include "roifusion/backbone.hpp"
#include "roifusion/common.hpp"
#include "roifusion/config.hpp"
#include "roifusion/data.hpp"
#include "roifusion/detector.hpp"
#include "roifusion/eval.hpp"
#include "roifusion/fusionkp.hpp"
#include "roifusion/geom.hpp"
#include "roifusion/head.hpp"
#include "roifusion/micronet.hpp"
#include "roifusion/roi.hpp"
#include "roifusion/sampling.hpp"
#include "roifusion/viz.hpp"
