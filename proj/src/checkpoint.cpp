#include "exin/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "exin/error.hpp"

namespace exin {

namespace {

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double d) { put_u64(out, std::bit_cast<uint64_t>(d)); }

struct Reader {
  const uint8_t* p;
  const uint8_t* end;
  const char* what;

  void need(size_t n) const {
    if (static_cast<size_t>(end - p) < n)
      throw IoError(std::string(what) + ": truncated checkpoint");
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[i]) << (8 * i);
    p += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
    p += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string bytes(size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(p), n);
    p += n;
    return s;
  }
};

}  // namespace

uint32_t crc32_bytes(const uint8_t* data, size_t n, uint32_t seed) {
  static const auto table = [] {
    std::array<uint32_t, 256> t{};
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? (0xEDB88320u ^ (c >> 1)) : (c >> 1);
      t[i] = c;
    }
    return t;
  }();
  uint32_t crc = seed ^ 0xFFFFFFFFu;
  for (size_t i = 0; i < n; ++i) crc = table[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

void Checkpoint::add(const std::string& name, const Shape& dims, const double* values,
                     int64_t n) {
  int64_t expect = 1;
  for (int64_t d : dims) expect *= d;
  if (expect != n) throw ContractError("checkpoint record '" + name + "': size/dims mismatch");
  records.push_back(CheckpointRecord{name, dims, std::vector<double>(values, values + n)});
}

const CheckpointRecord* Checkpoint::find(const std::string& name) const {
  for (const auto& r : records)
    if (r.name == name) return &r;
  return nullptr;
}

void Checkpoint::save(const std::string& path) const {
  std::string head;
  head += "EYXI";
  put_u32(head, kVersion);
  put_u64(head, config_text.size());
  head += config_text;
  put_u64(head, records.size());

  std::string body;
  for (const auto& r : records) {
    put_u32(body, static_cast<uint32_t>(r.name.size()));
    body += r.name;
    put_u32(body, static_cast<uint32_t>(r.dims.size()));
    for (int64_t d : r.dims) put_u64(body, static_cast<uint64_t>(d));
    for (double v : r.data) put_f64(body, v);
  }
  const uint32_t crc = crc32_bytes(reinterpret_cast<const uint8_t*>(body.data()), body.size());
  std::string tail;
  put_u32(tail, crc);

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + tmp);
    out.write(head.data(), static_cast<std::streamsize>(head.size()));
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    out.write(tail.data(), static_cast<std::streamsize>(tail.size()));
    if (!out) throw IoError("write failed: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place: " + path + " (" + ec.message() + ")");
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::string raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path);

  Reader r{reinterpret_cast<const uint8_t*>(raw.data()),
           reinterpret_cast<const uint8_t*>(raw.data()) + raw.size(), path.c_str()};
  if (r.bytes(4) != "EYXI") throw IoError(path + ": bad magic (not a checkpoint)");
  const uint32_t version = r.u32();
  if (version != kVersion)
    throw IoError(path + ": unsupported checkpoint version " + std::to_string(version));

  Checkpoint ck;
  ck.config_text = r.bytes(r.u64());
  const uint64_t count = r.u64();

  const uint8_t* body_begin = r.p;
  if (raw.size() < 4) throw IoError(path + ": truncated checkpoint");
  const uint8_t* body_end = reinterpret_cast<const uint8_t*>(raw.data()) + raw.size() - 4;
  if (body_end < body_begin) throw IoError(path + ": truncated checkpoint");

  for (uint64_t i = 0; i < count; ++i) {
    CheckpointRecord rec;
    rec.name = r.bytes(r.u32());
    const uint32_t rank = r.u32();
    int64_t n = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      rec.dims.push_back(static_cast<int64_t>(r.u64()));
      n *= rec.dims.back();
    }
    if (n < 0 || n > (1ll << 32)) throw IoError(path + ": implausible record size");
    rec.data.resize(static_cast<size_t>(n));
    for (int64_t j = 0; j < n; ++j) rec.data[static_cast<size_t>(j)] = r.f64();
    ck.records.push_back(std::move(rec));
  }
  if (r.p != body_end) throw IoError(path + ": trailing bytes before checksum");
  const uint32_t want = crc32_bytes(body_begin, static_cast<size_t>(body_end - body_begin));
  Reader tailr{body_end, body_end + 4, path.c_str()};
  const uint32_t got = tailr.u32();
  if (want != got) throw IoError(path + ": checksum mismatch (corrupt checkpoint)");
  return ck;
}

}  // namespace exin
