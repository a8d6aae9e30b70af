#pragma once

// Umbrella header for the part-based car detector library.

#include "partdet/channels.hpp"
#include "partdet/common.hpp"
#include "partdet/config.hpp"
#include "partdet/dataset.hpp"
#include "partdet/deformation.hpp"
#include "partdet/eval.hpp"
#include "partdet/gabor.hpp"
#include "partdet/gradcheck.hpp"
#include "partdet/image.hpp"
#include "partdet/network.hpp"
#include "partdet/nn.hpp"
#include "partdet/params.hpp"
#include "partdet/pgm.hpp"
#include "partdet/synthetic.hpp"
#include "partdet/tensor.hpp"
#include "partdet/trainer.hpp"
#include "partdet/visibility.hpp"
