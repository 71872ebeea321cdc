#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "facegan/optimizer.hpp"
#include "facegan/tensor.hpp"

namespace facegan {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Little-endian append-only byte encoder.
class ByteWriter {
 public:
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void i64(std::int64_t v);
  void f64(double v);
  void str(std::string_view s);
  void tensor(const nn::Tensor& t);
  const std::string& bytes() const { return out_; }

 private:
  std::string out_;
};

/// Bounds-checked decoder; overruns raise IoError naming the section.
class ByteReader {
 public:
  ByteReader(std::string_view bytes, std::string what);
  std::uint32_t u32();
  std::uint64_t u64();
  std::int64_t i64();
  double f64();
  std::string str();
  nn::Tensor tensor();
  bool done() const { return pos_ == bytes_.size(); }
  void expect_done() const;

 private:
  void need(std::size_t n) const;
  std::string_view bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

/// Versioned container of named byte sections.
/// Layout: "FGANCKPT", u32 version, u32 count, then per section
/// u32 name length, name, u64 size, payload.
class CheckpointFile {
 public:
  void set(const std::string& name, std::string bytes);
  bool has(const std::string& name) const { return sections_.count(name) != 0; }
  const std::string& get(const std::string& name) const;
  std::vector<std::string> section_names() const;

  /// Writes to a temporary sibling and renames it into place.
  void save(const std::filesystem::path& path) const;
  /// Reads every section, or only `wanted` ones (others are skipped unread).
  static CheckpointFile load(const std::filesystem::path& path,
                             const std::vector<std::string>& wanted = {});

 private:
  std::map<std::string, std::string> sections_;
};

std::string encode_parameters(const std::vector<const nn::Parameter*>& params);
/// Names and shapes must match exactly.
void decode_parameters(std::string_view bytes, const std::vector<nn::Parameter*>& params,
                       const std::string& what);

std::string encode_adam(const Adam& adam);
void decode_adam(std::string_view bytes, Adam& adam, const std::string& what);

}  // namespace facegan
