#include "facegan/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "facegan/errors.hpp"

namespace facegan {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

constexpr char kMagic[8] = {'F', 'G', 'A', 'N', 'C', 'K', 'P', 'T'};

template <typename T>
void append(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T read_value(std::istream& in, const std::filesystem::path& path, const char* what) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw IoError(path.string() + ": truncated checkpoint while reading " + what);
  }
  return v;
}

}  // namespace

void ByteWriter::u32(std::uint32_t v) { append(out_, v); }
void ByteWriter::u64(std::uint64_t v) { append(out_, v); }
void ByteWriter::i64(std::int64_t v) { append(out_, v); }
void ByteWriter::f64(double v) { append(out_, v); }

void ByteWriter::str(std::string_view s) {
  u64(s.size());
  out_.append(s);
}

void ByteWriter::tensor(const nn::Tensor& t) {
  const nn::Shape& s = t.shape();
  for (int d : {s.n, s.c, s.h, s.w}) u32(static_cast<std::uint32_t>(d));
  out_.append(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(double));
}

ByteReader::ByteReader(std::string_view bytes, std::string what)
    : bytes_(bytes), what_(std::move(what)) {}

void ByteReader::need(std::size_t n) const {
  if (bytes_.size() - pos_ < n) throw IoError(what_ + ": section data truncated");
}

std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v;
  std::memcpy(&v, bytes_.data() + pos_, 4);
  pos_ += 4;
  return v;
}

std::uint64_t ByteReader::u64() {
  need(8);
  std::uint64_t v;
  std::memcpy(&v, bytes_.data() + pos_, 8);
  pos_ += 8;
  return v;
}

std::int64_t ByteReader::i64() { return static_cast<std::int64_t>(u64()); }

double ByteReader::f64() {
  need(8);
  double v;
  std::memcpy(&v, bytes_.data() + pos_, 8);
  pos_ += 8;
  return v;
}

std::string ByteReader::str() {
  const std::uint64_t n = u64();
  need(n);
  std::string s(bytes_.substr(pos_, n));
  pos_ += n;
  return s;
}

nn::Tensor ByteReader::tensor() {
  nn::Shape s{};
  s.n = static_cast<int>(u32());
  s.c = static_cast<int>(u32());
  s.h = static_cast<int>(u32());
  s.w = static_cast<int>(u32());
  const std::size_t n = s.numel();
  need(n * sizeof(double));
  nn::Tensor t(s);
  std::memcpy(t.data(), bytes_.data() + pos_, n * sizeof(double));
  pos_ += n * sizeof(double);
  return t;
}

void ByteReader::expect_done() const {
  if (!done()) throw IoError(what_ + ": unexpected trailing bytes");
}

void CheckpointFile::set(const std::string& name, std::string bytes) {
  sections_[name] = std::move(bytes);
}

const std::string& CheckpointFile::get(const std::string& name) const {
  const auto it = sections_.find(name);
  if (it == sections_.end()) throw IoError("checkpoint has no section '" + name + "'");
  return it->second;
}

std::vector<std::string> CheckpointFile::section_names() const {
  std::vector<std::string> names;
  for (const auto& [k, v] : sections_) names.push_back(k);
  return names;
}

void CheckpointFile::save(const std::filesystem::path& path) const {
  std::string out(kMagic, sizeof(kMagic));
  append(out, kCheckpointVersion);
  append(out, static_cast<std::uint32_t>(sections_.size()));
  for (const auto& [name, bytes] : sections_) {
    append(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    append(out, static_cast<std::uint64_t>(bytes.size()));
    out += bytes;
  }
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + tmp.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into " + path.string() + ": " + ec.message());
}

CheckpointFile CheckpointFile::load(const std::filesystem::path& path,
                                    const std::vector<std::string>& wanted) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const std::uint64_t file_size = std::filesystem::file_size(path);
  char magic[sizeof(kMagic)];
  if (!in.read(magic, sizeof(magic))) throw IoError(path.string() + ": truncated checkpoint header");
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError(path.string() + ": not a checkpoint file");
  }
  const auto version = read_value<std::uint32_t>(in, path, "version");
  if (version != kCheckpointVersion) {
    throw IoError(path.string() + ": checkpoint version mismatch (expected " +
                  std::to_string(kCheckpointVersion) + ", found " + std::to_string(version) + ")");
  }
  const auto count = read_value<std::uint32_t>(in, path, "section count");
  CheckpointFile file;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = read_value<std::uint32_t>(in, path, "section name");
    if (name_len > 4096) throw IoError(path.string() + ": corrupt section table");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw IoError(path.string() + ": truncated section name");
    const auto size = read_value<std::uint64_t>(in, path, "section size");
    const auto here = static_cast<std::uint64_t>(in.tellg());
    if (size > file_size || here + size > file_size) {
      throw IoError(path.string() + ": truncated checkpoint in section '" + name + "'");
    }
    const bool keep =
        wanted.empty() || std::find(wanted.begin(), wanted.end(), name) != wanted.end();
    if (keep) {
      std::string bytes(size, '\0');
      in.read(bytes.data(), static_cast<std::streamsize>(size));
      file.sections_[name] = std::move(bytes);
    } else {
      in.seekg(static_cast<std::streamoff>(size), std::ios::cur);
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw IoError(path.string() + ": trailing bytes after checkpoint sections");
  }
  for (const auto& name : wanted) {
    if (!file.has(name)) throw IoError(path.string() + ": missing section '" + name + "'");
  }
  return file;
}

std::string encode_parameters(const std::vector<const nn::Parameter*>& params) {
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const nn::Parameter* p : params) {
    w.str(p->name);
    w.tensor(p->value);
  }
  return w.bytes();
}

void decode_parameters(std::string_view bytes, const std::vector<nn::Parameter*>& params,
                       const std::string& what) {
  ByteReader r(bytes, what);
  const std::uint32_t n = r.u32();
  if (n != params.size()) {
    throw ValidationError(what + ": expected " + std::to_string(params.size()) +
                          " parameters, found " + std::to_string(n));
  }
  for (nn::Parameter* p : params) {
    const std::string name = r.str();
    nn::Tensor t = r.tensor();
    if (name != p->name || !(t.shape() == p->value.shape())) {
      throw ValidationError(what + ": parameter '" + name + "' " + t.shape().str() +
                            " does not match '" + p->name + "' " + p->value.shape().str());
    }
    p->value = std::move(t);
  }
  r.expect_done();
}

std::string encode_adam(const Adam& adam) {
  ByteWriter w;
  w.i64(adam.steps());
  w.u32(static_cast<std::uint32_t>(adam.first_moments().size()));
  for (std::size_t i = 0; i < adam.first_moments().size(); ++i) {
    w.tensor(adam.first_moments()[i]);
    w.tensor(adam.second_moments()[i]);
  }
  return w.bytes();
}

void decode_adam(std::string_view bytes, Adam& adam, const std::string& what) {
  ByteReader r(bytes, what);
  const std::int64_t steps = r.i64();
  const std::uint32_t n = r.u32();
  if (n != adam.first_moments().size()) {
    throw ValidationError(what + ": optimizer moment count mismatch");
  }
  for (std::size_t i = 0; i < n; ++i) {
    nn::Tensor m = r.tensor();
    nn::Tensor v = r.tensor();
    if (!(m.shape() == adam.first_moments()[i].shape()) ||
        !(v.shape() == adam.second_moments()[i].shape())) {
      throw ValidationError(what + ": optimizer moment shape mismatch");
    }
    adam.first_moments()[i] = std::move(m);
    adam.second_moments()[i] = std::move(v);
  }
  adam.set_steps(steps);
  r.expect_done();
}

}  // namespace facegan
