#include "maskdg/train_config.hpp"

#include "maskdg/text_format.hpp"

#include <cmath>

namespace maskdg {

std::string_view to_string(Method method) {
  switch (method) {
    case Method::ERM: return "ERM";
    case Method::ActDiff: return "ActDiff";
    case Method::RRR: return "RRR";
  }
  return "?";
}

Method parse_method(std::string_view text) {
  if (text == "ERM" || text == "erm") return Method::ERM;
  if (text == "ActDiff" || text == "actdiff") return Method::ActDiff;
  if (text == "RRR" || text == "rrr") return Method::RRR;
  throw Error(ErrorKind::Parameter, "unknown method '" + std::string(text) + "'");
}

TrainConfig TrainConfig::defaults_for(Method method) {
  TrainConfig c;
  c.method = method;
  switch (method) {
    case Method::ERM:
      c.epochs = 15;
      break;
    case Method::ActDiff:
      c.epochs = 100;
      c.lambda_act = 0.1;
      break;
    case Method::RRR:
      c.epochs = 100;
      c.lambda_rrr = 1.0;
      break;
  }
  return c;
}

double TrainConfig::lambda() const {
  switch (method) {
    case Method::ActDiff: return lambda_act;
    case Method::RRR: return lambda_rrr;
    case Method::ERM: return 0.0;
  }
  return 0.0;
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw Error(ErrorKind::Parameter, "train config: " + what);
  };
  require(learning_rate >= 0.0 && weight_decay >= 0.0, "learning_rate and weight_decay must be >= 0");
  require(lambda_act >= 0.0 && lambda_rrr >= 0.0, "lambdas must be >= 0");
  require(momentum >= 0.0 && momentum < 1.0, "momentum must lie in [0,1)");
  require(batch_size >= 1 && epochs >= 1, "batch_size and epochs must be >= 1");
  require(scale_block >= 1, "scale_block must be >= 1");
  require(tap_layer >= 0 && tap_layer <= static_cast<int>(architecture.channels.size()), "tap_layer out of range");
  require(!architecture.channels.empty(), "architecture needs at least one conv block");
  require(std::isfinite(architecture.input_mean) && architecture.input_std > 0.0, "input_std must be positive");
  require(method == Method::ActDiff || lambda_act == 0.0, "lambda_act is only used by ActDiff");
  require(method == Method::RRR || lambda_rrr == 0.0, "lambda_rrr is only used by RRR");
}

std::vector<std::pair<std::string, std::string>> TrainConfig::to_fields() const {
  std::string channels;
  for (std::size_t i = 0; i < architecture.channels.size(); ++i) {
    channels += (i ? "," : "") + format_int(architecture.channels[i]);
  }
  return {
      {"method", std::string(to_string(method))},
      {"learning_rate", format_real(learning_rate)},
      {"weight_decay", format_real(weight_decay)},
      {"lambda_act", format_real(lambda_act)},
      {"lambda_rrr", format_real(lambda_rrr)},
      {"momentum", format_real(momentum)},
      {"batch_size", format_int(batch_size)},
      {"epochs", format_int(epochs)},
      {"seed", format_int(static_cast<long long>(seed))},
      {"mask_kind", std::string(to_string(mask_kind))},
      {"tap_layer", format_int(tap_layer)},
      {"scale_block", format_int(scale_block)},
      {"channels", channels},
      {"first_stride", format_int(architecture.first_stride)},
      {"pool", format_int(architecture.pool)},
      {"input_mean", format_real(architecture.input_mean)},
      {"input_std", format_real(architecture.input_std)},
  };
}

TrainConfig TrainConfig::from_fields(const std::map<std::string, std::string>& fields) {
  TrainConfig c;
  if (auto it = fields.find("method"); it != fields.end()) c = defaults_for(parse_method(it->second));
  for (const auto& [key, value] : fields) {
    if (key == "method") continue;
    if (key == "learning_rate") c.learning_rate = parse_real(value, key);
    else if (key == "weight_decay") c.weight_decay = parse_real(value, key);
    else if (key == "lambda_act") c.lambda_act = parse_real(value, key);
    else if (key == "lambda_rrr") c.lambda_rrr = parse_real(value, key);
    else if (key == "momentum") c.momentum = parse_real(value, key);
    else if (key == "batch_size") c.batch_size = static_cast<int>(parse_int(value, key));
    else if (key == "epochs") c.epochs = static_cast<int>(parse_int(value, key));
    else if (key == "seed") c.seed = static_cast<std::uint64_t>(parse_int(value, key));
    else if (key == "mask_kind") c.mask_kind = parse_mask_kind(value);
    else if (key == "tap_layer") c.tap_layer = static_cast<int>(parse_int(value, key));
    else if (key == "scale_block") c.scale_block = static_cast<int>(parse_int(value, key));
    else if (key == "first_stride") c.architecture.first_stride = static_cast<int>(parse_int(value, key));
    else if (key == "pool") c.architecture.pool = static_cast<int>(parse_int(value, key));
    else if (key == "input_mean") c.architecture.input_mean = parse_real(value, key);
    else if (key == "input_std") c.architecture.input_std = parse_real(value, key);
    else if (key == "channels") {
      c.architecture.channels.clear();
      for (const std::string& part : split(value, ',')) c.architecture.channels.push_back(static_cast<int>(parse_int(part, key)));
    } else {
      throw Error(ErrorKind::Parse, "unknown train config key '" + key + "'");
    }
  }
  return c;
}

}  // namespace maskdg
