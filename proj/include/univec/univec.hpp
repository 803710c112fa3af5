#pragma once

#include "univec/types.hpp"
#include "univec/sampling.hpp"
#include "univec/raster.hpp"
#include "univec/scene_io.hpp"
#include "univec/featstub.hpp"
#include "univec/params.hpp"
#include "univec/nn.hpp"
#include "univec/encoder.hpp"
#include "univec/decoder.hpp"
#include "univec/dsc.hpp"
#include "univec/metrics.hpp"
#include "univec/pred_io.hpp"
