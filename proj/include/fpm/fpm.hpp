#pragma once

#include "fpm/array2d.hpp"
#include "fpm/config.hpp"
#include "fpm/denoisers.hpp"
#include "fpm/error.hpp"
#include "fpm/experiment.hpp"
#include "fpm/fft.hpp"
#include "fpm/forward.hpp"
#include "fpm/geometry.hpp"
#include "fpm/illumination.hpp"
#include "fpm/image_io.hpp"
#include "fpm/metrics.hpp"
#include "fpm/pnp.hpp"
#include "fpm/process.hpp"
#include "fpm/pupil.hpp"
#include "fpm/rng.hpp"
#include "fpm/selftest.hpp"
#include "fpm/sim.hpp"
