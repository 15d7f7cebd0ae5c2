#pragma once

// Single include for the whole library: point cloud types and sampling,
// Chamfer distance with analytic subgradients, the flow decoder with
// hand-derived backpropagation, auto-decoder training, latent-only inference,
// evaluation metrics and the synthetic episode generator.

#include "motionflow/chamfer.hpp"
#include "motionflow/common.hpp"
#include "motionflow/geometry.hpp"
#include "motionflow/inference.hpp"
#include "motionflow/io.hpp"
#include "motionflow/metrics.hpp"
#include "motionflow/morpher.hpp"
#include "motionflow/synth.hpp"
#include "motionflow/training.hpp"
