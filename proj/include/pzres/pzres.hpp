// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "pzres/commands.hpp"
#include "pzres/config.hpp"
#include "pzres/degrade.hpp"
#include "pzres/error.hpp"
#include "pzres/io.hpp"
#include "pzres/layers.hpp"
#include "pzres/metrics.hpp"
#include "pzres/network.hpp"
#include "pzres/ops.hpp"
#include "pzres/random.hpp"
#include "pzres/tensor.hpp"
#include "pzres/train.hpp"
#include "pzres/trainer.hpp"
