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

#include "ecorec/multimodal.hpp"

#include <cmath>
#include <string>

#include "ecorec/error.hpp"

namespace ecorec::multimodal {
namespace {

std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

Matrix sigmoid(const Matrix& x) {
  return x.unaryExpr([](double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
}

}  // namespace

FusionMethod parse_fusion_method(std::string_view text) {
  if (text == "sum") return FusionMethod::Sum;
  if (text == "concat") return FusionMethod::Concat;
  if (text == "gated" || text == "gate") return FusionMethod::Gated;
  if (text == "attention") return FusionMethod::Attention;
  throw ConfigError("unknown fusion method '" + std::string(text) +
                    "' (expected sum, concat, gated or attention)");
}

GateDirection parse_gate_direction(std::string_view text) {
  if (text == "image_gates_text") return GateDirection::ImageGatesText;
  if (text == "text_gates_image") return GateDirection::TextGatesImage;
  throw ConfigError("unknown gate direction '" + std::string(text) +
                    "' (expected image_gates_text or text_gates_image)");
}

const char* to_string(FusionMethod method) {
  switch (method) {
    case FusionMethod::Sum: return "sum";
    case FusionMethod::Concat: return "concat";
    case FusionMethod::Gated: return "gated";
    case FusionMethod::Attention: return "attention";
  }
  return "?";
}

const char* to_string(GateDirection direction) {
  return direction == GateDirection::ImageGatesText ? "image_gates_text" : "text_gates_image";
}

Matrix project_features(const Matrix& raw, const Matrix& weights, const RowVector& bias) {
  if (weights.rows() != raw.cols() || bias.size() != weights.cols()) {
    throw DimensionError("project_features: raw " + shape(raw) + ", weights " + shape(weights) +
                         ", bias length " + std::to_string(bias.size()));
  }
  Matrix out = raw * weights;
  out.rowwise() += bias;
  return out;
}

void project_features_backward(const Matrix& raw, const Matrix& grad_out, Matrix& grad_weights,
                               RowVector& grad_bias) {
  grad_weights.noalias() += raw.transpose() * grad_out;
  grad_bias += grad_out.colwise().sum();
}

Matrix fuse(const FusionConfig& config, const Matrix& image, const Matrix& text,
            const Matrix& raw_image, const Matrix& raw_text, const FusionWeights& weights,
            FusionTrace* trace) {
  FusionTrace local;
  FusionTrace& t = trace ? *trace : local;

  if (config.method == FusionMethod::Concat) {
    if (raw_image.rows() != raw_text.rows() ||
        weights.concat.rows() != raw_image.cols() + raw_text.cols()) {
      throw DimensionError("fuse(concat): raw image " + shape(raw_image) + ", raw text " +
                           shape(raw_text) + ", concat weights " + shape(weights.concat));
    }
    t.concat_input.resize(raw_image.rows(), raw_image.cols() + raw_text.cols());
    t.concat_input << raw_image, raw_text;
    return t.concat_input * weights.concat;
  }

  if (image.rows() != text.rows() || image.cols() != text.cols()) {
    throw DimensionError("fuse: image " + shape(image) + " vs text " + shape(text));
  }
  t.image = image;
  t.text = text;

  switch (config.method) {
    case FusionMethod::Sum:
      return image + text;
    case FusionMethod::Gated: {
      const bool image_gates = config.gate_direction == GateDirection::ImageGatesText;
      t.gate = sigmoid(image_gates ? image : text);
      return t.gate.cwiseProduct(image_gates ? text : image);
    }
    case FusionMethod::Attention: {
      const Eigen::Index d = image.cols();
      if (weights.attention.rows() != d || weights.attention.cols() != d ||
          weights.query.size() != d) {
        throw DimensionError("fuse(attention): attention " + shape(weights.attention) +
                             ", query length " + std::to_string(weights.query.size()) +
                             ", d=" + std::to_string(d));
      }
      t.image_hidden = (image * weights.attention.transpose()).array().tanh().matrix();
      t.text_hidden = (text * weights.attention.transpose()).array().tanh().matrix();
      const Vector s_image = t.image_hidden * weights.query;
      const Vector s_text = t.text_hidden * weights.query;
      t.alpha.resize(image.rows());
      t.beta.resize(image.rows());
      for (Eigen::Index p = 0; p < image.rows(); ++p) {
        const double m = std::max(s_image(p), s_text(p));
        const double ei = std::exp(s_image(p) - m);
        const double et = std::exp(s_text(p) - m);
        t.alpha(p) = ei / (ei + et);
        t.beta(p) = et / (ei + et);
      }
      return t.alpha.asDiagonal() * image + t.beta.asDiagonal() * text;
    }
    case FusionMethod::Concat:
      break;
  }
  throw ConfigError("fuse: unsupported method");
}

void fuse_backward(const FusionConfig& config, const FusionWeights& weights,
                   const FusionTrace& trace, const Matrix& grad_out, Matrix& grad_image,
                   Matrix& grad_text, FusionWeights& grad_weights) {
  switch (config.method) {
    case FusionMethod::Sum:
      grad_image += grad_out;
      grad_text += grad_out;
      return;
    case FusionMethod::Concat:
      grad_weights.concat.noalias() += trace.concat_input.transpose() * grad_out;
      return;
    case FusionMethod::Gated: {
      const bool image_gates = config.gate_direction == GateDirection::ImageGatesText;
      const Matrix& modulated = image_gates ? trace.text : trace.image;
      Matrix& grad_gating = image_gates ? grad_image : grad_text;
      Matrix& grad_modulated = image_gates ? grad_text : grad_image;
      grad_modulated += grad_out.cwiseProduct(trace.gate);
      grad_gating += (grad_out.array() * modulated.array() * trace.gate.array() *
                      (1.0 - trace.gate.array()))
                         .matrix();
      return;
    }
    case FusionMethod::Attention: {
      const Eigen::Index n = grad_out.rows();
      // d(alpha IF + beta TF); with beta = 1 - alpha the score gradient is
      // alpha beta (g.IF - g.TF) for the image score and its negation for text.
      const Vector g_alpha = grad_out.cwiseProduct(trace.image).rowwise().sum();
      const Vector g_beta = grad_out.cwiseProduct(trace.text).rowwise().sum();
      Vector g_score(n);
      for (Eigen::Index p = 0; p < n; ++p) {
        g_score(p) = trace.alpha(p) * trace.beta(p) * (g_alpha(p) - g_beta(p));
      }
      grad_weights.query.noalias() += trace.image_hidden.transpose() * g_score;
      grad_weights.query.noalias() -= trace.text_hidden.transpose() * g_score;

      const RowVector q = weights.query.transpose();
      const Matrix g_hidden_image =
          (g_score * q).cwiseProduct((1.0 - trace.image_hidden.array().square()).matrix());
      const Matrix g_hidden_text =
          (-g_score * q).cwiseProduct((1.0 - trace.text_hidden.array().square()).matrix());
      grad_weights.attention.noalias() += g_hidden_image.transpose() * trace.image;
      grad_weights.attention.noalias() += g_hidden_text.transpose() * trace.text;

      grad_image += trace.alpha.asDiagonal() * grad_out;
      grad_image.noalias() += g_hidden_image * weights.attention;
      grad_text += trace.beta.asDiagonal() * grad_out;
      grad_text.noalias() += g_hidden_text * weights.attention;
      return;
    }
  }
}

RowVector fuse_row(const FusionConfig& config, const RowVector& image, const RowVector& text,
                   const RowVector& raw_image, const RowVector& raw_text,
                   const FusionWeights& weights) {
  const Matrix out = fuse(config, Matrix(image), Matrix(text), Matrix(raw_image),
                          Matrix(raw_text), weights);
  return out.row(0);
}

AttentionPair attention_weights(const RowVector& image, const RowVector& text,
                                const Matrix& attention, const Vector& query) {
  FusionTrace trace;
  FusionWeights weights{Matrix(), attention, query};
  fuse({FusionMethod::Attention, GateDirection::ImageGatesText}, Matrix(image), Matrix(text),
       Matrix(), Matrix(), weights, &trace);
  return {trace.alpha(0), trace.beta(0)};
}

}  // namespace ecorec::multimodal
