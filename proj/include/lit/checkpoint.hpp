#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lit/error.hpp"
#include "lit/model_config.hpp"
#include "lit/optim.hpp"
#include "lit/param_store.hpp"

namespace lit {

// File layout: "LITCKPT1", uint64 little-endian header length, JSON header,
// then the payload of little-endian float32 tensors in index order.
inline constexpr char kCheckpointMagic[] = "LITCKPT1";
inline constexpr int kCheckpointVersion = 1;

enum class CheckpointErrorKind {
  kIo,
  kBadMagic,
  kBadHeader,
  kTruncated,
  kIndexMismatch,
  kChecksum,
};

std::string to_string(CheckpointErrorKind kind);

class CheckpointError : public Error {
 public:
  CheckpointError(CheckpointErrorKind kind, const std::string& message);
  CheckpointErrorKind kind() const { return kind_; }

 private:
  CheckpointErrorKind kind_;
};

struct Checkpoint {
  ModelConfig config;
  ParamStoreF params;
  std::optional<ParamStoreF> ema;
  double ema_decay = 0.0;
  std::optional<AdamState<float>> optimizer;
  std::int64_t step = 0;
};

struct TensorIndexEntry {
  std::string name;
  Shape shape;
  std::uint64_t offset = 0;
  std::uint64_t length = 0;
  std::uint64_t checksum = 0;  // FNV-1a 64 over the tensor bytes
};

struct CheckpointHeader {
  int format_version = 0;
  ModelConfig config;
  bool optimizer_state_present = false;
  bool ema_present = false;
  std::int64_t step = 0;
  std::uint64_t payload_bytes = 0;
  std::vector<TensorIndexEntry> index;
};

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);

// Reads and validates the header only; the payload is not touched.
CheckpointHeader read_checkpoint_header(const std::string& path);

// Full load. With verify set, each tensor's checksum is compared.
Checkpoint load_checkpoint(const std::string& path, bool verify = true);

// Parameters from the checkpoint; `ema` picks the shadow weights and throws
// CheckpointError(kIndexMismatch) when they are absent.
ParamStoreF checkpoint_weights(const Checkpoint& checkpoint, bool ema);

std::uint64_t fnv1a64(const unsigned char* data, std::size_t size);

}  // namespace lit
