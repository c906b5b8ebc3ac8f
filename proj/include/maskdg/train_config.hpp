#pragma once

#include "maskdg/classifier.hpp"
#include "maskdg/core.hpp"
#include "maskdg/masks.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace maskdg {

enum class Method { ERM, ActDiff, RRR };

std::string_view to_string(Method method);
Method parse_method(std::string_view text);

struct TrainConfig {
  Method method = Method::ERM;
  double learning_rate = 1e-2;
  double weight_decay = 0.0;
  double lambda_act = 0.0;
  double lambda_rrr = 0.0;
  double momentum = 0.9;
  int batch_size = 16;
  int epochs = 15;
  std::uint64_t seed = 0;
  MaskKind mask_kind = MaskKind::Abnormality;
  int tap_layer = 0;  // 1-based conv block; 0 = final block
  int scale_block = kDefaultScaleBlock;
  CnnArchitecture architecture{};

  // Method defaults: ERM trains 15 epochs, the regularized methods 100
  // with lambda_act = 0.1 or lambda_rrr = 1.
  static TrainConfig defaults_for(Method method);

  double lambda() const;
  // Throws Error(Parameter): negative rates, zero batch/epochs, or a
  // lambda set for a method that does not use it.
  void validate() const;

  std::vector<std::pair<std::string, std::string>> to_fields() const;
  static TrainConfig from_fields(const std::map<std::string, std::string>& fields);
};

}  // namespace maskdg
