#include "lit/convert.hpp"

#include <algorithm>
#include <cctype>

#include "lit/error.hpp"

namespace lit {

namespace {

enum class Unit { kEmbeddingsAndFinal, kModulation, kFfn, kAttention };

Unit classify(const std::string& path) {
  if (path.rfind("blocks.", 0) != 0) return Unit::kEmbeddingsAndFinal;
  if (path.find(".adaLN_modulation.") != std::string::npos) return Unit::kModulation;
  if (path.find(".mlp.") != std::string::npos) return Unit::kFfn;
  if (path.find(".attn.") != std::string::npos) return Unit::kAttention;
  throw StructuralError("unrecognised parameter path: " + path);
}

struct Segment {
  std::string tensor;  // module name inside attn, e.g. "kv"
  std::int64_t index;  // which D-wide column block
};

Segment segment_of(ProjectionLayout layout, AttentionPart part) {
  if (part == AttentionPart::kO) return {"proj", 0};
  const int p = part == AttentionPart::kQ ? 0 : part == AttentionPart::kK ? 1 : 2;
  switch (layout) {
    case ProjectionLayout::kFusedKv:
      return p == 0 ? Segment{"q", 0} : Segment{"kv", p - 1};
    case ProjectionLayout::kFusedQkv:
      return {"qkv", p};
    case ProjectionLayout::kSeparate:
      return {p == 0 ? "q" : p == 1 ? "k" : "v", 0};
  }
  throw ContractError("unknown projection layout");
}

// Parts stored in module `name` of a layout, in column order.
std::vector<AttentionPart> parts_in(ProjectionLayout layout, const std::string& name) {
  std::vector<AttentionPart> out;
  for (auto part : {AttentionPart::kQ, AttentionPart::kK, AttentionPart::kV, AttentionPart::kO}) {
    if (segment_of(layout, part).tensor == name) out.push_back(part);
  }
  return out;
}

template <class T>
void copy_columns(const Tensor<T>& src, std::int64_t src_block, Tensor<T>& dst,
                  std::int64_t dst_block, std::int64_t width, const std::string& what) {
  const bool is_matrix = dst.rank() == 2;
  const std::int64_t rows = is_matrix ? dst.dim(0) : 1;
  const std::int64_t dst_cols = dst.dim(dst.rank() - 1);
  const std::int64_t src_cols = src.dim(src.rank() - 1);
  const std::int64_t src_rows = src.rank() == 2 ? src.dim(0) : 1;
  if (src.rank() != dst.rank() || src_rows != rows || (src_block + 1) * width > src_cols ||
      (dst_block + 1) * width > dst_cols) {
    throw StructuralError("cannot copy " + what + ": teacher " + to_string(src.shape()) +
                          " vs student " + to_string(dst.shape()));
  }
  const auto s = src.data();
  auto d = dst.mutable_data();
  for (std::int64_t r = 0; r < rows; ++r) {
    std::copy_n(s.begin() + r * src_cols + src_block * width, width,
                d.begin() + r * dst_cols + dst_block * width);
  }
}

}  // namespace

std::string to_string(WeightSource source) { return source == WeightSource::kEma ? "ema" : "raw"; }

WeightSource parse_weight_source(const std::string& name) {
  if (name == "ema") return WeightSource::kEma;
  if (name == "raw") return WeightSource::kRaw;
  throw ConfigError("unknown weight source: " + name);
}

char part_letter(AttentionPart part) {
  switch (part) {
    case AttentionPart::kQ: return 'Q';
    case AttentionPart::kK: return 'K';
    case AttentionPart::kV: return 'V';
    case AttentionPart::kO: return 'O';
  }
  return '?';
}

std::set<AttentionPart> parse_attention_subset(const std::string& letters) {
  std::set<AttentionPart> out;
  if (letters == "none") return out;
  for (char ch : letters) {
    switch (std::toupper(static_cast<unsigned char>(ch))) {
      case 'Q': out.insert(AttentionPart::kQ); break;
      case 'K': out.insert(AttentionPart::kK); break;
      case 'V': out.insert(AttentionPart::kV); break;
      case 'O': out.insert(AttentionPart::kO); break;
      case ',': case ' ': break;
      default: throw ConfigError("unknown attention part '" + std::string(1, ch) + "'");
    }
  }
  return out;
}

std::string format_attention_subset(const std::set<AttentionPart>& parts) {
  std::string out;
  for (auto p : parts) out.push_back(part_letter(p));
  return out.empty() ? "none" : out;
}

InheritSpec InheritSpec::everything() {
  InheritSpec s;
  s.attention_subset = {AttentionPart::kQ, AttentionPart::kK, AttentionPart::kV, AttentionPart::kO};
  return s;
}

InheritSpec InheritSpec::nothing() {
  InheritSpec s;
  s.load_ffn = s.load_modulation = s.load_embeddings_and_final = false;
  return s;
}

template <class T>
EmaState<T> EmaState<T>::init(const ParamStore<T>& live, double decay) {
  if (!(decay >= 0.0 && decay <= 1.0)) throw ConfigError("EMA decay must lie in [0, 1]");
  EmaState s;
  s.decay = decay;
  for (const auto& [path, t] : live) s.shadow.add(path, t.detach());
  return s;
}

template <class T>
void ema_update(const ParamStore<T>& live, EmaState<T>& ema) {
  std::vector<std::string> missing;
  for (const auto& [path, t] : live) {
    if (!ema.shadow.contains(path)) missing.push_back(path);
  }
  for (const auto& [path, t] : ema.shadow) {
    if (!live.contains(path)) missing.push_back(path);
  }
  if (!missing.empty()) {
    std::string msg = "EMA shadow and live parameters differ:";
    for (const auto& m : missing) msg += " " + m;
    throw StructuralError(msg);
  }
  const double d = ema.decay;
  for (auto& [path, shadow] : ema.shadow) {
    const auto src = live.get(path).data();
    auto dst = shadow.mutable_data();
    if (src.size() != dst.size()) throw StructuralError("EMA shape mismatch at " + path);
    for (std::size_t i = 0; i < dst.size(); ++i) {
      dst[i] = static_cast<T>(d * static_cast<double>(dst[i]) +
                              (1.0 - d) * static_cast<double>(src[i]));
    }
  }
}

template <class T>
ParamStore<T> inherit(const ParamStore<T>& teacher, const ModelConfig& teacher_config,
                      const ModelConfig& student_config, const InheritSpec& spec,
                      std::uint64_t seed, ConversionReport* report) {
  if (!same_geometry(teacher_config, student_config)) {
    throw StructuralError("teacher and student differ in depth, width or geometry");
  }
  ParamStore<T> student = init_model<T>(student_config, seed);
  ConversionReport local;
  local.teacher_layout = to_string(teacher_config.layout);
  local.student_layout = to_string(student_config.layout);
  local.source = to_string(spec.source);
  local.attention_subset = format_attention_subset(spec.attention_subset);
  local.seed = seed;
  const std::int64_t width = student_config.hidden;

  for (auto& [path, value] : student) {
    const Unit unit = classify(path);
    if (unit != Unit::kAttention) {
      const bool load = unit == Unit::kFfn          ? spec.load_ffn
                        : unit == Unit::kModulation ? spec.load_modulation
                                                    : spec.load_embeddings_and_final;
      if (!load) {
        local.fresh.push_back(path);
        continue;
      }
      const Tensor<T> src = teacher.get(path);
      if (src.shape() != value.shape()) {
        throw StructuralError("shape mismatch for " + path + ": teacher " +
                              to_string(src.shape()) + " vs student " + to_string(value.shape()));
      }
      auto d = value.mutable_data();
      std::copy(src.data().begin(), src.data().end(), d.begin());
      local.copied.push_back(path);
      continue;
    }

    // blocks.<i>.attn.<module>.<leaf>
    const auto attn_at = path.find(".attn.") + 6;
    const auto dot = path.find('.', attn_at);
    const std::string module = path.substr(attn_at, dot - attn_at);
    const std::string leaf = path.substr(dot + 1);
    const std::string teacher_prefix = path.substr(0, attn_at);
    const auto parts = parts_in(student_config.layout, module);
    if (parts.empty()) {  // depthwise conv: the teacher has none
      local.fresh.push_back(path);
      continue;
    }
    for (std::size_t idx = 0; idx < parts.size(); ++idx) {
      const AttentionPart part = parts[idx];
      std::string unit_name = path;
      if (parts.size() > 1) {
        unit_name += "[";
        unit_name.push_back(static_cast<char>(std::tolower(part_letter(part))));
        unit_name += "]";
      }
      if (!spec.attention_subset.count(part)) {
        local.fresh.push_back(unit_name);
        continue;
      }
      const Segment seg = segment_of(teacher_config.layout, part);
      const Tensor<T>& src = teacher.get(teacher_prefix + seg.tensor + "." + leaf);
      copy_columns(src, seg.index, value, static_cast<std::int64_t>(idx), width, unit_name);
      local.copied.push_back(unit_name);
    }
  }
  if (report) *report = std::move(local);
  return student;
}

std::vector<InheritRow> inheritance_rows() {
  using P = AttentionPart;
  return {{"none", {}},
          {"QKV", {P::kQ, P::kK, P::kV}},
          {"KV", {P::kK, P::kV}},
          {"V", {P::kV}},
          {"Q", {P::kQ}},
          {"O", {P::kO}}};
}

#define LIT_INSTANTIATE(T)                                                                   \
  template struct EmaState<T>;                                                               \
  template void ema_update<T>(const ParamStore<T>&, EmaState<T>&);                           \
  template ParamStore<T> inherit<T>(const ParamStore<T>&, const ModelConfig&,                \
                                    const ModelConfig&, const InheritSpec&, std::uint64_t,   \
                                    ConversionReport*);

LIT_INSTANTIATE(float)
LIT_INSTANTIATE(double)
#undef LIT_INSTANTIATE

}  // namespace lit
