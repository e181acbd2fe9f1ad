#pragma once

#include "config.hpp"
#include "conformal.hpp"
#include "csv.hpp"
#include "datagen.hpp"
#include "dataset.hpp"
#include "density.hpp"
#include "errors.hpp"
#include "experiment.hpp"
#include "gaussian_mixture.hpp"
#include "grid.hpp"
#include "hdr.hpp"
#include "kernel_cde.hpp"
#include "metrics.hpp"
#include "rng.hpp"
#include "stats.hpp"
