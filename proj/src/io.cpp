#include "goalgen/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace goalgen {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

void put_f32(std::vector<std::uint8_t>& out, float f) {
  put_u32(out, std::bit_cast<std::uint32_t>(f));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t& pos) {
  if (pos + 4 > in.size()) throw DataError("FPC1: truncated payload");
  std::uint32_t v = static_cast<std::uint32_t>(in[pos]) |
                    (static_cast<std::uint32_t>(in[pos + 1]) << 8) |
                    (static_cast<std::uint32_t>(in[pos + 2]) << 16) |
                    (static_cast<std::uint32_t>(in[pos + 3]) << 24);
  pos += 4;
  return v;
}

float get_f32(const std::vector<std::uint8_t>& in, std::size_t& pos) {
  return std::bit_cast<float>(get_u32(in, pos));
}

}  // namespace

std::vector<std::uint8_t> encode_fpc1(const PointCloud& pc) {
  pc.validate();
  const int n = pc.size(), d = pc.feature_dim();
  std::vector<std::uint8_t> out;
  out.reserve(12 + 4 * static_cast<std::size_t>(n) * (3 + d));
  for (char c : {'F', 'P', 'C', '1'}) out.push_back(static_cast<std::uint8_t>(c));
  put_u32(out, static_cast<std::uint32_t>(n));
  put_u32(out, static_cast<std::uint32_t>(d));
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < 3; ++k) put_f32(out, static_cast<float>(pc.coords(i, k)));
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < d; ++k) put_f32(out, static_cast<float>(pc.features(i, k)));
  return out;
}

PointCloud decode_fpc1(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || bytes[0] != 'F' || bytes[1] != 'P' || bytes[2] != 'C' ||
      bytes[3] != '1')
    throw DataError("FPC1: bad magic");
  std::size_t pos = 4;
  const std::uint32_t n = get_u32(bytes, pos);
  const std::uint32_t d = get_u32(bytes, pos);
  if (n < 1) throw DataError("FPC1: empty cloud");
  const std::size_t need = pos + 4ull * n * (3ull + d);
  if (bytes.size() < need) throw DataError("FPC1: truncated payload");
  if (bytes.size() > need) throw DataError("FPC1: trailing bytes");
  PointCloud pc;
  pc.coords.resize(n, 3);
  for (std::uint32_t i = 0; i < n; ++i)
    for (int k = 0; k < 3; ++k) pc.coords(i, k) = get_f32(bytes, pos);
  if (d > 0) {
    pc.features.resize(n, d);
    for (std::uint32_t i = 0; i < n; ++i)
      for (std::uint32_t k = 0; k < d; ++k) pc.features(i, k) = get_f32(bytes, pos);
  }
  pc.validate();
  return pc;
}

void write_fpc1(const std::filesystem::path& path, const PointCloud& pc) {
  write_binary_file(path, encode_fpc1(pc));
}

PointCloud read_fpc1(const std::filesystem::path& path) {
  return decode_fpc1(read_binary_file(path));
}

PointCloud fpc1_roundtrip(const PointCloud& pc) { return decode_fpc1(encode_fpc1(pc)); }

Json pose_to_json(const RigidTransform& t) {
  const Eigen::Vector4d q = t.quat_wxyz();
  return Json{{"rotation_wxyz", {q[0], q[1], q[2], q[3]}},
              {"translation", {t.translation[0], t.translation[1], t.translation[2]}}};
}

RigidTransform pose_from_json(const Json& j) {
  try {
    const auto& qj = j.at("rotation_wxyz");
    const auto& tj = j.at("translation");
    if (qj.size() != 4 || tj.size() != 3) throw DataError("pose: wrong array sizes");
    Eigen::Vector4d q(qj[0].get<double>(), qj[1].get<double>(), qj[2].get<double>(),
                      qj[3].get<double>());
    Eigen::Vector3d t(tj[0].get<double>(), tj[1].get<double>(), tj[2].get<double>());
    RigidTransform out = RigidTransform::from_quat_wxyz(q, t);
    out.validate();
    return out;
  } catch (const Json::exception& e) {
    throw DataError(std::string("pose: malformed JSON: ") + e.what());
  }
}

Json vec3_to_json(const Eigen::Vector3d& v) { return Json{v[0], v[1], v[2]}; }

Eigen::Vector3d vec3_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 3) throw DataError("expected 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open file: " + path.string());
  std::string s((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return s;
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write file: " + path.string());
  f.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!f) throw DataError("write failed: " + path.string());
}

std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open file: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

void write_binary_file(const std::filesystem::path& path,
                       const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write file: " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("write failed: " + path.string());
}

Json read_json_file(const std::filesystem::path& path) {
  try {
    return Json::parse(read_text_file(path));
  } catch (const Json::exception& e) {
    throw DataError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const Json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

}  // namespace goalgen
