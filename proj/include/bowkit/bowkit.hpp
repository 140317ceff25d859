#pragma once

#include "bowkit/aggregation.hpp"
#include "bowkit/bench.hpp"
#include "bowkit/classify.hpp"
#include "bowkit/data.hpp"
#include "bowkit/dictionary.hpp"
#include "bowkit/encoding.hpp"
#include "bowkit/error.hpp"
#include "bowkit/io.hpp"
#include "bowkit/numerics.hpp"
#include "bowkit/parallel.hpp"
