#pragma once

#include "dpe/energy.hpp"
#include "dpe/error.hpp"
#include "dpe/fft.hpp"
#include "dpe/image_plane.hpp"
#include "dpe/io.hpp"
#include "dpe/kernel.hpp"
#include "dpe/metrics.hpp"
#include "dpe/operators.hpp"
#include "dpe/predictor.hpp"
#include "dpe/propagation.hpp"
#include "dpe/rng.hpp"
#include "dpe/selftest.hpp"
#include "dpe/tasks.hpp"
