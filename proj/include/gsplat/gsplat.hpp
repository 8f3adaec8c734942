// Copyright Contributors to the gsplat-distill Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "gsplat/cli.hpp"
#include "gsplat/config.hpp"
#include "gsplat/gradcheck.hpp"
#include "gsplat/guide.hpp"
#include "gsplat/image.hpp"
#include "gsplat/noise.hpp"
#include "gsplat/ply.hpp"
#include "gsplat/raster.hpp"
#include "gsplat/raster_backward.hpp"
#include "gsplat/rng.hpp"
#include "gsplat/scene.hpp"
#include "gsplat/trainer.hpp"
#include "gsplat/vgs.hpp"
