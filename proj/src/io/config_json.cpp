#include "lit/config_json.hpp"

#include <fstream>
#include <functional>
#include <map>

#include "lit/error.hpp"

namespace lit {

namespace {

using Setter = std::function<void(const Json&)>;

// Applies each key of `j` through its setter; unknown keys are rejected.
void apply(const Json& j, const std::string& what, const std::map<std::string, Setter>& setters) {
  if (!j.is_object()) throw ConfigError(what + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown " + what + " field: " + key);
    try {
      it->second(value);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(what + " field " + key + ": " + e.what());
    }
  }
}

template <class V>
Setter set(V& target) {
  return [&target](const Json& v) { target = v.get<V>(); };
}

}  // namespace

Json to_json(const ModelConfig& c) {
  return {{"name", c.name},
          {"layers", c.layers},
          {"hidden", c.hidden},
          {"heads", c.heads},
          {"patch", c.patch},
          {"in_channels", c.in_channels},
          {"image_size", c.image_size},
          {"num_classes", c.num_classes},
          {"variant", to_string(c.variant)},
          {"dwc_kernel", c.dwc_kernel},
          {"predicts_variance", c.predicts_variance},
          {"layout", to_string(c.layout)},
          {"mlp_ratio", c.mlp_ratio},
          {"frequency_dim", c.frequency_dim},
          {"num_timesteps", c.num_timesteps},
          {"kernel_eps", c.kernel_eps},
          {"focused_power", c.focused_power}};
}

ModelConfig model_config_from_json(const Json& j) {
  ModelConfig c;
  if (j.is_object() && j.contains("preset")) c = ModelConfig::preset(j.at("preset").get<std::string>());
  apply(j, "model config",
        {{"preset", [](const Json&) {}},
         {"name", set(c.name)},
         {"layers", set(c.layers)},
         {"hidden", set(c.hidden)},
         {"heads", set(c.heads)},
         {"patch", set(c.patch)},
         {"in_channels", set(c.in_channels)},
         {"image_size", set(c.image_size)},
         {"num_classes", set(c.num_classes)},
         {"variant", [&](const Json& v) { c.variant = parse_attention_variant(v.get<std::string>()); }},
         {"dwc_kernel", set(c.dwc_kernel)},
         {"predicts_variance", set(c.predicts_variance)},
         {"layout", [&](const Json& v) { c.layout = parse_projection_layout(v.get<std::string>()); }},
         {"mlp_ratio", set(c.mlp_ratio)},
         {"frequency_dim", set(c.frequency_dim)},
         {"num_timesteps", set(c.num_timesteps)},
         {"kernel_eps", set(c.kernel_eps)},
         {"focused_power", set(c.focused_power)}});
  c.validate();
  return c;
}

Json to_json(const DistillConfig& c) { return {{"lambda1", c.lambda1}, {"lambda2", c.lambda2}}; }

DistillConfig distill_config_from_json(const Json& j) {
  DistillConfig c;
  apply(j, "distill config", {{"lambda1", set(c.lambda1)}, {"lambda2", set(c.lambda2)}});
  c.validate();
  return c;
}

Json to_json(const InheritSpec& s) {
  return {{"source", to_string(s.source)},
          {"attention_subset", format_attention_subset(s.attention_subset)},
          {"load_ffn", s.load_ffn},
          {"load_modulation", s.load_modulation},
          {"load_embeddings_and_final", s.load_embeddings_and_final}};
}

InheritSpec inherit_spec_from_json(const Json& j) {
  InheritSpec s;
  apply(j, "inherit spec",
        {{"source", [&](const Json& v) { s.source = parse_weight_source(v.get<std::string>()); }},
         {"attention_subset",
          [&](const Json& v) {
            if (v.is_array()) {
              std::string letters;
              for (const auto& e : v) letters += e.get<std::string>();
              s.attention_subset = parse_attention_subset(letters);
            } else {
              s.attention_subset = parse_attention_subset(v.get<std::string>());
            }
          }},
         {"load_ffn", set(s.load_ffn)},
         {"load_modulation", set(s.load_modulation)},
         {"load_embeddings_and_final", set(s.load_embeddings_and_final)}});
  return s;
}

Json to_json(const AdamWConfig& c) {
  return {{"lr", c.lr},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"eps", c.eps},
          {"weight_decay", c.weight_decay}};
}

AdamWConfig adamw_config_from_json(const Json& j) {
  AdamWConfig c;
  apply(j, "optimizer config",
        {{"lr", set(c.lr)},
         {"beta1", set(c.beta1)},
         {"beta2", set(c.beta2)},
         {"eps", set(c.eps)},
         {"weight_decay", set(c.weight_decay)}});
  if (!(c.lr > 0.0)) throw ConfigError("learning rate must be positive");
  return c;
}

Json to_json(const DatasetSpec& s) {
  return {{"num_classes", s.num_classes},
          {"image_size", s.image_size},
          {"channels", s.channels},
          {"samples", s.samples},
          {"radius", s.radius},
          {"amplitude", s.amplitude},
          {"center_jitter", s.center_jitter},
          {"amplitude_jitter", s.amplitude_jitter}};
}

DatasetSpec dataset_spec_from_json(const Json& j) {
  DatasetSpec s;
  apply(j, "dataset spec",
        {{"num_classes", set(s.num_classes)},
         {"image_size", set(s.image_size)},
         {"channels", set(s.channels)},
         {"samples", set(s.samples)},
         {"radius", set(s.radius)},
         {"amplitude", set(s.amplitude)},
         {"center_jitter", set(s.center_jitter)},
         {"amplitude_jitter", set(s.amplitude_jitter)}});
  s.validate();
  return s;
}

Json to_json(const ConversionReport& r) {
  return {{"teacher_layout", r.teacher_layout},
          {"student_layout", r.student_layout},
          {"source", r.source},
          {"attention_subset", r.attention_subset},
          {"seed", r.seed},
          {"copied", r.copied},
          {"fresh", r.fresh}};
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + " is not valid JSON: " + e.what());
  }
}

void write_json_file(const std::string& path, const Json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out << j.dump(2) << "\n";
  if (!out) throw Error("write failed for " + path);
}

}  // namespace lit
