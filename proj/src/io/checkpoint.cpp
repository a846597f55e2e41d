#include "lit/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>

#include "lit/config_json.hpp"
#include "lit/model.hpp"

namespace lit {

namespace {

constexpr std::size_t kMagicSize = 8;

[[noreturn]] void fail(CheckpointErrorKind kind, const std::string& message) {
  throw CheckpointError(kind, message);
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

void append_floats(std::string& out, const TensorF& t) {
  for (float f : t.data()) {
    const auto bits = std::bit_cast<std::uint32_t>(f);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
  }
}

struct Named {
  std::string name;
  const TensorF* tensor;
};

std::vector<Named> collect(const Checkpoint& ck) {
  std::vector<Named> out;
  for (const auto& [p, t] : ck.params) out.push_back({p, &t});
  if (ck.ema) {
    for (const auto& [p, t] : *ck.ema) out.push_back({"ema." + p, &t});
  }
  if (ck.optimizer) {
    for (const auto& [p, t] : ck.optimizer->m) out.push_back({"optim.m." + p, &t});
    for (const auto& [p, t] : ck.optimizer->v) out.push_back({"optim.v." + p, &t});
  }
  return out;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(CheckpointErrorKind::kIo, "cannot open checkpoint " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return bytes;
}

struct Parsed {
  CheckpointHeader header;
  std::size_t payload_start = 0;
};

Parsed parse_header(const std::vector<unsigned char>& bytes, const std::string& path) {
  if (bytes.size() < kMagicSize || std::memcmp(bytes.data(), kCheckpointMagic, kMagicSize) != 0) {
    fail(CheckpointErrorKind::kBadMagic, path + " is not a checkpoint (bad magic)");
  }
  if (bytes.size() < kMagicSize + 8) fail(CheckpointErrorKind::kTruncated, path + ": no header length");
  const std::uint64_t header_len = get_u64(bytes.data() + kMagicSize);
  const std::size_t header_start = kMagicSize + 8;
  if (header_len > bytes.size() - header_start) {
    fail(CheckpointErrorKind::kTruncated, path + ": header extends past end of file");
  }
  Json j;
  try {
    j = Json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(header_start),
                    bytes.begin() + static_cast<std::ptrdiff_t>(header_start + header_len));
  } catch (const std::exception& e) {
    fail(CheckpointErrorKind::kBadHeader, path + ": header is not valid JSON: " + e.what());
  }

  Parsed out;
  out.payload_start = header_start + header_len;
  CheckpointHeader& h = out.header;
  try {
    h.format_version = j.at("format_version").get<int>();
    if (h.format_version != kCheckpointVersion) {
      fail(CheckpointErrorKind::kBadHeader,
           path + ": unsupported format version " + std::to_string(h.format_version));
    }
    h.config = model_config_from_json(j.at("model_config"));
    h.optimizer_state_present = j.at("optimizer_state_present").get<bool>();
    h.ema_present = j.at("ema_present").get<bool>();
    h.step = j.at("step").get<std::int64_t>();
    h.payload_bytes = j.at("payload_bytes").get<std::uint64_t>();
    for (const auto& [name, e] : j.at("tensors").items()) {
      TensorIndexEntry entry;
      entry.name = name;
      if (e.at("dtype").get<std::string>() != "f32") {
        fail(CheckpointErrorKind::kBadHeader, path + ": unsupported dtype for " + name);
      }
      entry.shape = e.at("shape").get<Shape>();
      entry.offset = e.at("offset").get<std::uint64_t>();
      entry.length = e.at("length").get<std::uint64_t>();
      entry.checksum = std::stoull(e.at("fnv1a64").get<std::string>(), nullptr, 16);
      h.index.push_back(std::move(entry));
    }
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    fail(CheckpointErrorKind::kBadHeader, path + ": malformed header: " + e.what());
  }

  // Offsets must tile the payload exactly, in order.
  std::uint64_t cursor = 0;
  for (const auto& e : h.index) {
    for (auto d : e.shape) {
      if (d < 0) fail(CheckpointErrorKind::kIndexMismatch, path + ": negative dimension in " + e.name);
    }
    if (e.offset != cursor) {
      fail(CheckpointErrorKind::kIndexMismatch, path + ": tensor " + e.name + " starts at " +
                                                    std::to_string(e.offset) + ", expected " +
                                                    std::to_string(cursor));
    }
    if (e.length != static_cast<std::uint64_t>(numel(e.shape)) * 4) {
      fail(CheckpointErrorKind::kIndexMismatch,
           path + ": byte length of " + e.name + " does not match shape " + to_string(e.shape));
    }
    cursor += e.length;
  }
  if (cursor != h.payload_bytes) {
    fail(CheckpointErrorKind::kIndexMismatch, path + ": index covers " + std::to_string(cursor) +
                                                  " bytes but payload declares " +
                                                  std::to_string(h.payload_bytes));
  }
  return out;
}

// The parameter set must be exactly what the config builds, and the EMA and
// optimizer moments must mirror it.
std::optional<std::string> structure_problem(const Checkpoint& ck) {
  const ParamStoreF expected = init_model<float>(ck.config, 0);
  auto matches = [&](const ParamStoreF& s, const std::string& what) -> std::optional<std::string> {
    if (s.size() != expected.size()) {
      return what + " has " + std::to_string(s.size()) + " tensors, config needs " +
             std::to_string(expected.size());
    }
    auto it = s.begin();
    for (const auto& [p, t] : expected) {
      if (it->first != p || it->second.shape() != t.shape()) {
        return what + " entry " + it->first + " " + to_string(it->second.shape()) +
               " does not match config entry " + p + " " + to_string(t.shape());
      }
      ++it;
    }
    return std::nullopt;
  };
  if (auto e = matches(ck.params, "parameter set")) return e;
  if (ck.ema) {
    if (auto e = matches(*ck.ema, "EMA state")) return e;
  }
  if (ck.optimizer) {
    if (auto e = matches(ck.optimizer->m, "optimizer first moment")) return e;
    if (auto e = matches(ck.optimizer->v, "optimizer second moment")) return e;
  }
  return std::nullopt;
}

}  // namespace

std::string to_string(CheckpointErrorKind kind) {
  switch (kind) {
    case CheckpointErrorKind::kIo: return "io";
    case CheckpointErrorKind::kBadMagic: return "bad_magic";
    case CheckpointErrorKind::kBadHeader: return "bad_header";
    case CheckpointErrorKind::kTruncated: return "truncated";
    case CheckpointErrorKind::kIndexMismatch: return "index_mismatch";
    case CheckpointErrorKind::kChecksum: return "checksum";
  }
  return "unknown";
}

CheckpointError::CheckpointError(CheckpointErrorKind kind, const std::string& message)
    : Error("checkpoint error (" + to_string(kind) + "): " + message), kind_(kind) {}

std::uint64_t fnv1a64(const unsigned char* data, std::size_t size) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  if (const auto problem = structure_problem(ck)) {
    throw StructuralError("cannot save " + path + ": " + *problem);
  }
  const auto tensors = collect(ck);
  std::string payload;
  Json index = Json::object();
  for (const auto& [name, t] : tensors) {
    const std::size_t start = payload.size();
    append_floats(payload, *t);
    const auto* bytes = reinterpret_cast<const unsigned char*>(payload.data()) + start;
    index[name] = {{"dtype", "f32"},
                   {"shape", t->shape()},
                   {"offset", start},
                   {"length", payload.size() - start},
                   {"fnv1a64", hex64(fnv1a64(bytes, payload.size() - start))}};
  }
  Json header = {{"format_version", kCheckpointVersion},
                 {"model_config", to_json(ck.config)},
                 {"optimizer_state_present", ck.optimizer.has_value()},
                 {"optimizer_step", ck.optimizer ? ck.optimizer->step : 0},
                 {"ema_present", ck.ema.has_value()},
                 {"ema_decay", ck.ema_decay},
                 {"step", ck.step},
                 {"payload_bytes", payload.size()},
                 {"tensors", index}};
  const std::string text = header.dump(1);

  std::string blob(kCheckpointMagic, kMagicSize);
  put_u64(blob, text.size());
  blob += text;
  blob += payload;

  // Write beside the target and rename so a crash never leaves a torn file.
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(CheckpointErrorKind::kIo, "cannot write " + tmp);
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) fail(CheckpointErrorKind::kIo, "write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(CheckpointErrorKind::kIo, "cannot move " + tmp + " to " + path + ": " + ec.message());
}

CheckpointHeader read_checkpoint_header(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(CheckpointErrorKind::kIo, "cannot open checkpoint " + path);
  unsigned char prefix[kMagicSize + 8];
  in.read(reinterpret_cast<char*>(prefix), sizeof prefix);
  if (in.gcount() < static_cast<std::streamsize>(kMagicSize) ||
      std::memcmp(prefix, kCheckpointMagic, kMagicSize) != 0) {
    fail(CheckpointErrorKind::kBadMagic, path + " is not a checkpoint (bad magic)");
  }
  if (in.gcount() < static_cast<std::streamsize>(sizeof prefix)) {
    fail(CheckpointErrorKind::kTruncated, path + ": no header length");
  }
  const std::uint64_t header_len = get_u64(prefix + kMagicSize);
  in.seekg(0, std::ios::end);
  const auto file_size = static_cast<std::uint64_t>(in.tellg());
  if (header_len > file_size - sizeof prefix) {
    fail(CheckpointErrorKind::kTruncated, path + ": header extends past end of file");
  }
  std::vector<unsigned char> bytes(prefix, prefix + sizeof prefix);
  bytes.resize(sizeof prefix + header_len);
  in.seekg(sizeof prefix);
  in.read(reinterpret_cast<char*>(bytes.data() + sizeof prefix),
          static_cast<std::streamsize>(header_len));
  return parse_header(bytes, path).header;
}

Checkpoint load_checkpoint(const std::string& path, bool verify) {
  const auto bytes = read_file(path);
  const Parsed parsed = parse_header(bytes, path);
  const CheckpointHeader& h = parsed.header;
  const std::uint64_t available = bytes.size() - parsed.payload_start;
  if (available < h.payload_bytes) {
    fail(CheckpointErrorKind::kTruncated, path + ": payload has " + std::to_string(available) +
                                              " of " + std::to_string(h.payload_bytes) + " bytes");
  }
  if (available > h.payload_bytes) {
    fail(CheckpointErrorKind::kIndexMismatch, path + ": " +
                                                  std::to_string(available - h.payload_bytes) +
                                                  " trailing bytes after the payload");
  }

  Checkpoint ck;
  ck.config = h.config;
  ck.step = h.step;
  const unsigned char* payload = bytes.data() + parsed.payload_start;
  ParamStoreF ema, m, v;
  for (const auto& e : h.index) {
    const unsigned char* src = payload + e.offset;
    if (verify && fnv1a64(src, e.length) != e.checksum) {
      fail(CheckpointErrorKind::kChecksum, path + ": checksum mismatch in " + e.name);
    }
    std::vector<float> values(e.length / 4);
    for (std::size_t i = 0; i < values.size(); ++i) {
      std::uint32_t bits = 0;
      for (int b = 3; b >= 0; --b) bits = (bits << 8) | src[4 * i + b];
      values[i] = std::bit_cast<float>(bits);
    }
    TensorF t(e.shape, std::move(values));
    if (e.name.rfind("ema.", 0) == 0) {
      ema.add(e.name.substr(4), t);
    } else if (e.name.rfind("optim.m.", 0) == 0) {
      m.add(e.name.substr(8), t);
    } else if (e.name.rfind("optim.v.", 0) == 0) {
      v.add(e.name.substr(8), t);
    } else {
      t.set_requires_grad(true);
      ck.params.add(e.name, t);
    }
  }

  if (h.ema_present) {
    ck.ema = std::move(ema);
  } else if (!ema.empty()) {
    fail(CheckpointErrorKind::kIndexMismatch, path + ": EMA tensors present but not declared");
  }
  if (h.optimizer_state_present) {
    AdamState<float> st;
    st.m = std::move(m);
    st.v = std::move(v);
    ck.optimizer = std::move(st);
  } else if (!m.empty() || !v.empty()) {
    fail(CheckpointErrorKind::kIndexMismatch, path + ": optimizer tensors present but not declared");
  }
  if (const auto problem = structure_problem(ck)) {
    fail(CheckpointErrorKind::kIndexMismatch, path + ": " + *problem);
  }

  // Scalars outside the tensor index.
  const std::uint64_t header_len = get_u64(bytes.data() + kMagicSize);
  const Json j = Json::parse(bytes.begin() + kMagicSize + 8,
                             bytes.begin() + static_cast<std::ptrdiff_t>(kMagicSize + 8 + header_len));
  ck.ema_decay = j.value("ema_decay", 0.0);
  if (ck.optimizer) ck.optimizer->step = j.value("optimizer_step", std::int64_t{0});
  return ck;
}

ParamStoreF checkpoint_weights(const Checkpoint& checkpoint, bool ema) {
  if (!ema) return checkpoint.params.clone();
  if (!checkpoint.ema) {
    fail(CheckpointErrorKind::kIndexMismatch, "checkpoint holds no EMA weights");
  }
  ParamStoreF out = checkpoint.ema->clone();
  out.set_requires_grad(true);
  return out;
}

}  // namespace lit
