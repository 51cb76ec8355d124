// Copyright 2026 The ecorec Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <string_view>

#include "ecorec/linalg.hpp"

namespace ecorec::multimodal {

enum class FusionMethod { Sum, Concat, Gated, Attention };
enum class GateDirection { ImageGatesText, TextGatesImage };

FusionMethod parse_fusion_method(std::string_view text);
GateDirection parse_gate_direction(std::string_view text);
const char* to_string(FusionMethod method);
const char* to_string(GateDirection direction);

struct FusionConfig {
  FusionMethod method = FusionMethod::Attention;
  GateDirection gate_direction = GateDirection::ImageGatesText;
};

// Trainable fusion tensors. Only the active method's fields are read.
struct FusionWeights {
  Matrix concat;     // (D_image + D_text) x d, applied to the raw features
  Matrix attention;  // d x d
  Vector query;      // d
};

// row_p = raw_p W + b, no activation. Throws DimensionError on shape mismatch.
Matrix project_features(const Matrix& raw, const Matrix& weights, const RowVector& bias);

// Gradients of a projection w.r.t. its weights and bias, accumulated.
void project_features_backward(const Matrix& raw, const Matrix& grad_out, Matrix& grad_weights,
                               RowVector& grad_bias);

struct FusionTrace {
  Matrix image;        // projected image features (IF)
  Matrix text;         // projected text features (TF)
  Matrix gate;         // sigmoid of the gating modality
  Matrix image_hidden; // tanh(W_a IF) per row
  Matrix text_hidden;  // tanh(W_a TF) per row
  Vector alpha;        // image importance per row
  Vector beta;         // text importance per row
  Matrix concat_input; // [raw_image, raw_text]
};

// Fuses row-aligned image/text features into pattern representations:
//   Sum:       IF + TF
//   Concat:    [raw_IF, raw_TF] W_c  (bypasses the projections)
//   Gated:     sigmoid(IF) * TF, or sigmoid(TF) * IF when swapped
//   Attention: alpha IF + beta TF, (alpha, beta) = softmax(q.tanh(W_a IF), q.tanh(W_a TF))
// raw_image / raw_text are only read by Concat.
Matrix fuse(const FusionConfig& config, const Matrix& image, const Matrix& text,
            const Matrix& raw_image, const Matrix& raw_text, const FusionWeights& weights,
            FusionTrace* trace = nullptr);

// Backward pass of fuse(). grad_image / grad_text receive dLoss/dIF and
// dLoss/dTF (unused under Concat); weight gradients are accumulated.
void fuse_backward(const FusionConfig& config, const FusionWeights& weights,
                   const FusionTrace& trace, const Matrix& grad_out, Matrix& grad_image,
                   Matrix& grad_text, FusionWeights& grad_weights);

// Single-pattern convenience wrapper around fuse().
RowVector fuse_row(const FusionConfig& config, const RowVector& image, const RowVector& text,
                   const RowVector& raw_image, const RowVector& raw_text,
                   const FusionWeights& weights);

struct AttentionPair {
  double image = 0.5;
  double text = 0.5;
};

AttentionPair attention_weights(const RowVector& image, const RowVector& text,
                                const Matrix& attention, const Vector& query);

}  // namespace ecorec::multimodal
