#pragma once

#include "streamdf/tensor.hpp"

namespace streamdf {

// Head outputs for one input prefix: one row per consumed token, two logits
// per row (disfluency head: fluent/disfluent; wait head: predict/wait).
struct PrefixOutputs {
  Matrix disfluency_logits;
  Matrix wait_logits;

  int length() const { return disfluency_logits.rows; }
};

}  // namespace streamdf
