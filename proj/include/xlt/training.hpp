#pragma once

#include "xlt/training/batching.hpp"
#include "xlt/training/checkpoint.hpp"
#include "xlt/training/corpus.hpp"
#include "xlt/training/synthetic.hpp"
#include "xlt/training/trainer.hpp"
