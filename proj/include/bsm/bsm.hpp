// Umbrella header.
#pragma once

#include "bsm/array.hpp"
#include "bsm/common.hpp"
#include "bsm/config.hpp"
#include "bsm/correlation.hpp"
#include "bsm/direction.hpp"
#include "bsm/experiments.hpp"
#include "bsm/fft.hpp"
#include "bsm/filters.hpp"
#include "bsm/hrtf.hpp"
#include "bsm/io.hpp"
#include "bsm/metrics.hpp"
#include "bsm/room.hpp"
#include "bsm/sph.hpp"
#include "bsm/stft.hpp"
#include "bsm/synth.hpp"
