#pragma once

#include "amdm/adaptive_mask.hpp"
#include "amdm/channel_stack.hpp"
#include "amdm/denoiser.hpp"
#include "amdm/errors.hpp"
#include "amdm/experiments.hpp"
#include "amdm/grid.hpp"
#include "amdm/io.hpp"
#include "amdm/kspace.hpp"
#include "amdm/metrics.hpp"
#include "amdm/patterns.hpp"
#include "amdm/phantom.hpp"
#include "amdm/random.hpp"
#include "amdm/recon.hpp"
#include "amdm/sde.hpp"
#include "amdm/training.hpp"
#include "amdm/wavelet.hpp"
