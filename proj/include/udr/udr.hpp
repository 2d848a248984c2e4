#pragma once

#include "udr/adam.hpp"
#include "udr/autodiff.hpp"
#include "udr/complex_image.hpp"
#include "udr/dataset.hpp"
#include "udr/denoiser.hpp"
#include "udr/diffusion.hpp"
#include "udr/errors.hpp"
#include "udr/gradcheck.hpp"
#include "udr/io.hpp"
#include "udr/mask.hpp"
#include "udr/metrics.hpp"
#include "udr/params.hpp"
#include "udr/phantom.hpp"
#include "udr/physics.hpp"
#include "udr/sampler.hpp"
#include "udr/selfsup.hpp"
#include "udr/tensor.hpp"
