#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "lit/model.hpp"
#include "lit/param_store.hpp"

namespace lit {

enum class WeightSource { kRaw, kEma };
enum class AttentionPart { kQ, kK, kV, kO };

std::string to_string(WeightSource source);
WeightSource parse_weight_source(const std::string& name);
char part_letter(AttentionPart part);  // 'Q', 'K', 'V', 'O'
// "QKV" -> {Q, K, V}; "" or "none" -> {}.
std::set<AttentionPart> parse_attention_subset(const std::string& letters);
std::string format_attention_subset(const std::set<AttentionPart>& parts);

struct InheritSpec {
  WeightSource source = WeightSource::kEma;
  std::set<AttentionPart> attention_subset;  // empty: attention initialised fresh
  bool load_ffn = true;
  bool load_modulation = true;
  bool load_embeddings_and_final = true;

  static InheritSpec everything();
  static InheritSpec nothing();
};

template <class T>
struct EmaState {
  ParamStore<T> shadow;
  double decay = 0.9999;

  static EmaState init(const ParamStore<T>& live, double decay);
};

// shadow <- decay shadow + (1 - decay) live, per parameter.
template <class T>
void ema_update(const ParamStore<T>& live, EmaState<T>& ema);

// A unit is a full parameter path, or `path[q]`, `path[k]`, `path[v]` for one
// projection's columns inside a fused tensor.
struct ConversionReport {
  std::vector<std::string> copied;
  std::vector<std::string> fresh;
  std::string teacher_layout;
  std::string student_layout;
  std::string source;
  std::string attention_subset;
  std::uint64_t seed = 0;
};

// Student parameters with the units named by `spec` copied bitwise from the
// teacher and every other unit taken from init_model(student_config, seed).
// Throws StructuralError when depth, width or geometry differ.
template <class T>
ParamStore<T> inherit(const ParamStore<T>& teacher, const ModelConfig& teacher_config,
                      const ModelConfig& student_config, const InheritSpec& spec,
                      std::uint64_t seed, ConversionReport* report = nullptr);

// Inheritance rows of the weight-loading ablation: none, QKV, KV, V, Q, O.
struct InheritRow {
  std::string label;
  std::set<AttentionPart> attention_subset;
};
std::vector<InheritRow> inheritance_rows();

}  // namespace lit
