// Copyright 2026 The dpvi Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DPVI_DATASET_HPP_
#define DPVI_DATASET_HPP_

#include <Eigen/Core>
#include <stdexcept>

namespace dpvi {

// In-memory design matrix plus optional binary labels in {-1, +1}. Labels are
// absent (size 0) for unsupervised data such as mixture-model samples.
struct dataset {
  Eigen::MatrixXd features;  // rows() examples by dim() features
  Eigen::VectorXd labels;

  Eigen::Index rows() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }
  bool has_labels() const { return labels.size() == features.rows(); }

  void validate() const {
    if (labels.size() != 0 && labels.size() != features.rows()) {
      throw std::invalid_argument(
          "label count does not match the number of feature rows");
    }
  }
};

}  // namespace dpvi

#endif  // DPVI_DATASET_HPP_
