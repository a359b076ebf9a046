// Copyright Contributors to the splatcore project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "splatcore/common.hpp"
#include "splatcore/fit.hpp"
#include "splatcore/geometry.hpp"
#include "splatcore/head.hpp"
#include "splatcore/image_io.hpp"
#include "splatcore/masking.hpp"
#include "splatcore/objective.hpp"
#include "splatcore/optim.hpp"
#include "splatcore/ply.hpp"
#include "splatcore/raster.hpp"
#include "splatcore/scene_io.hpp"
#include "splatcore/sh.hpp"
#include "splatcore/splat.hpp"
#include "splatcore/synthetic.hpp"
#include "splatcore/train.hpp"
