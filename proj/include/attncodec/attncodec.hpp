#pragma once

#include "attncodec/adapter.hpp"
#include "attncodec/analysis.hpp"
#include "attncodec/codec.hpp"
#include "attncodec/error.hpp"
#include "attncodec/formats.hpp"
#include "attncodec/guidance.hpp"
#include "attncodec/image.hpp"
#include "attncodec/metrics.hpp"
#include "attncodec/pipeline.hpp"
#include "attncodec/random.hpp"
#include "attncodec/range_coder.hpp"
#include "attncodec/report.hpp"
#include "attncodec/synthetic.hpp"
#include "attncodec/tensor.hpp"
#include "attncodec/vit.hpp"
