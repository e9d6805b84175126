#pragma once

#include "crophybrid/common.hpp"
#include "crophybrid/data.hpp"
#include "crophybrid/eval.hpp"
#include "crophybrid/features.hpp"
#include "crophybrid/model.hpp"
#include "crophybrid/nn.hpp"
#include "crophybrid/pipeline.hpp"
#include "crophybrid/rng.hpp"
#include "crophybrid/tensor.hpp"
#include "crophybrid/threadpool.hpp"
