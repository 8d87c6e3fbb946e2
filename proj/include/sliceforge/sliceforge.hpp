#pragma once

#include "sliceforge/core.hpp"
#include "sliceforge/drn.hpp"
#include "sliceforge/error.hpp"
#include "sliceforge/harness.hpp"
#include "sliceforge/mapper.hpp"
#include "sliceforge/nn.hpp"
#include "sliceforge/rng.hpp"
#include "sliceforge/sched.hpp"
#include "sliceforge/trainer.hpp"
