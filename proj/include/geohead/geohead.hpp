#pragma once

// Umbrella header for the geohead toolkit: regression heads over text
// embeddings producing geographic points or 2-D Gaussian mixtures, the loss
// family and analytic gradients, probabilistic evaluation metrics, and
// per-user location aggregation.

#include "geohead/checkpoint.hpp"
#include "geohead/errors.hpp"
#include "geohead/features.hpp"
#include "geohead/geo.hpp"
#include "geohead/gmm.hpp"
#include "geohead/head.hpp"
#include "geohead/loss.hpp"
#include "geohead/metrics.hpp"
#include "geohead/random.hpp"
#include "geohead/useragg.hpp"
