#pragma once

#include "samreg/ddf_fit.hpp"
#include "samreg/errors.hpp"
#include "samreg/features.hpp"
#include "samreg/grid.hpp"
#include "samreg/io.hpp"
#include "samreg/matching.hpp"
#include "samreg/metrics.hpp"
#include "samreg/sampling.hpp"
#include "samreg/segmentation.hpp"
#include "samreg/synth.hpp"
#include "samreg/volume.hpp"
