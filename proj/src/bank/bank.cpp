#include "bank/bank.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace naf {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'N', 'A', 'F', '1'};
constexpr uint32_t kVersion = 1;

std::array<uint32_t, 256> crc_table() {
  std::array<uint32_t, 256> t{};
  for (uint32_t i = 0; i < 256; ++i) {
    uint32_t c = i;
    for (int k = 0; k < 8; ++k) c = (c >> 1) ^ ((c & 1) ? 0xEDB88320u : 0);
    t[i] = c;
  }
  return t;
}

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back((char)(v >> (8 * i) & 0xFF));
}

uint32_t get_u32(const std::string& buf, size_t& off) {
  require(off + 4 <= buf.size(), Errc::io_error, "truncated weight blob");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= (uint32_t)(uint8_t)buf[off + i] << (8 * i);
  off += 4;
  return v;
}

void append_segments(std::string& out, const ad::ParamVector& pv) {
  for (const auto& seg : pv.segments) {
    put_u32(out, (uint32_t)seg.name.size());
    out.append(seg.name);
    put_u32(out, 2);
    put_u32(out, (uint32_t)seg.value.rows());
    put_u32(out, (uint32_t)seg.value.cols());
    static_assert(sizeof(float) == 4);
    size_t bytes = (size_t)seg.value.size() * 4;
    size_t pos = out.size();
    out.resize(pos + bytes);
    std::memcpy(out.data() + pos, seg.value.data(), bytes);
  }
}

std::string encode_blob(const NafModel& model) {
  std::string out(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, (uint32_t)(model.statics.segments.size() +
                          model.dynamics.segments.size()));
  append_segments(out, model.statics);
  append_segments(out, model.dynamics);
  return out;
}

void decode_blob(const std::string& buf, NafModel& model) {
  require(buf.size() >= 12 && std::memcmp(buf.data(), kMagic, 4) == 0,
          Errc::io_error, "not a weight blob: bad magic");
  size_t off = 4;
  uint32_t version = get_u32(buf, off);
  require(version == kVersion, Errc::io_error,
          "unsupported weight blob version " + std::to_string(version));
  uint32_t n = get_u32(buf, off);
  for (uint32_t i = 0; i < n; ++i) {
    uint32_t name_len = get_u32(buf, off);
    require(off + name_len <= buf.size(), Errc::io_error,
            "truncated weight blob");
    std::string name = buf.substr(off, name_len);
    off += name_len;
    uint32_t ndim = get_u32(buf, off);
    require(ndim == 2, Errc::io_error, "unexpected tensor rank in blob");
    uint32_t rows = get_u32(buf, off);
    uint32_t cols = get_u32(buf, off);
    MatX<float>& dst = model.statics.has(name) ? model.statics.at(name)
                                               : model.dynamics.at(name);
    require((uint32_t)dst.rows() == rows && (uint32_t)dst.cols() == cols,
            Errc::io_error, "segment shape mismatch for " + name);
    size_t bytes = (size_t)rows * cols * 4;
    require(off + bytes <= buf.size(), Errc::io_error,
            "truncated weight blob");
    std::memcpy(dst.data(), buf.data() + off, bytes);
    off += bytes;
  }
  require(off == buf.size(), Errc::io_error, "trailing bytes in weight blob");
}

std::string timestamp_utc() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

nlohmann::json entry_to_json(const BankEntry& e) {
  std::vector<float> desc(e.mean_descriptor.data(),
                          e.mean_descriptor.data() + e.mean_descriptor.size());
  return nlohmann::json{{"id", e.id},
                        {"narration", e.narration},
                        {"file", e.file},
                        {"created", e.created},
                        {"checksum", e.checksum},
                        {"has_dynamics", e.has_dynamics},
                        {"mean_descriptor", desc},
                        {"config", e.config}};
}

BankEntry entry_from_json(const nlohmann::json& j) {
  BankEntry e;
  e.id = j.at("id").get<std::string>();
  e.narration = j.at("narration").get<std::string>();
  e.file = j.at("file").get<std::string>();
  e.created = j.value("created", "");
  e.checksum = j.at("checksum").get<uint32_t>();
  e.has_dynamics = j.value("has_dynamics", false);
  auto desc = j.at("mean_descriptor").get<std::vector<float>>();
  e.mean_descriptor = Eigen::Map<const VecX<float>>(desc.data(), desc.size());
  e.config = j.at("config");
  return e;
}

nlohmann::json load_manifest(const fs::path& dir) {
  fs::path p = dir / "manifest.json";
  if (!fs::exists(p))
    return nlohmann::json{{"format_version", 1},
                          {"entries", nlohmann::json::array()}};
  std::ifstream in(p);
  require(in.good(), Errc::io_error, "cannot read manifest: " + p.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    raise(Errc::io_error, "corrupt manifest: " + std::string(e.what()));
  }
  require(j.value("format_version", 0) == 1, Errc::io_error,
          "unsupported manifest version");
  return j;
}

void store_manifest(const fs::path& dir, const nlohmann::json& j) {
  fs::path tmp = dir / "manifest.json.tmp";
  {
    std::ofstream out(tmp);
    require(out.good(), Errc::io_error,
            "cannot write manifest: " + tmp.string());
    out << j.dump(2) << '\n';
    require(out.good(), Errc::io_error,
            "failed writing manifest: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, dir / "manifest.json", ec);
  require(!ec, Errc::io_error, "manifest rename failed: " + ec.message());
}

std::set<std::string> tokenize(const std::string& text) {
  std::set<std::string> toks;
  std::string cur;
  for (char ch : text) {
    if (std::isalnum((unsigned char)ch)) {
      cur.push_back((char)std::tolower((unsigned char)ch));
    } else if (!cur.empty()) {
      toks.insert(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) toks.insert(cur);
  return toks;
}

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 1.0;
  size_t inter = 0;
  for (const auto& t : a) inter += b.count(t);
  size_t uni = a.size() + b.size() - inter;
  return uni == 0 ? 0.0 : (double)inter / (double)uni;
}

double cosine(const VecX<float>& a, const VecX<float>& b) {
  if (a.size() != b.size() || a.size() == 0) return 0.0;
  double na = a.norm(), nb = b.norm();
  if (na < 1e-12 || nb < 1e-12) return 0.0;
  return a.cast<double>().dot(b.cast<double>()) / (na * nb);
}

}  // namespace

uint32_t crc32_bytes(const uint8_t* data, size_t n) {
  static const std::array<uint32_t, 256> table = crc_table();
  uint32_t c = 0xFFFFFFFFu;
  for (size_t i = 0; i < n; ++i) c = table[(c ^ data[i]) & 0xFF] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

BankEntry save_naf(const NafModel& model, const std::string& narration,
                   const std::string& bank_dir, const std::string& id) {
  require(!id.empty() && id.find('/') == std::string::npos &&
              id.find('\\') == std::string::npos,
          Errc::invalid_argument, "bank id must be a plain name");
  fs::path dir(bank_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, Errc::io_error, "cannot create bank directory: " + bank_dir);

  nlohmann::json manifest = load_manifest(dir);
  for (const auto& j : manifest["entries"])
    require(j.at("id").get<std::string>() != id, Errc::invalid_argument,
            "bank already holds an entry with id " + id);

  std::string blob = encode_blob(model);
  BankEntry e;
  e.id = id;
  e.narration = narration;
  e.file = id + ".naf";
  e.created = timestamp_utc();
  e.checksum = crc32_bytes((const uint8_t*)blob.data(), blob.size());
  e.has_dynamics = model.has_dynamics;
  e.mean_descriptor = model.mean_surface_descriptor(512, model.cfg.seed + 9);
  e.config = model.cfg;

  {
    std::ofstream out(dir / e.file, std::ios::binary);
    require(out.good(), Errc::io_error,
            "cannot write weight blob: " + (dir / e.file).string());
    out.write(blob.data(), (std::streamsize)blob.size());
    require(out.good(), Errc::io_error,
            "failed writing weight blob: " + (dir / e.file).string());
  }
  manifest["entries"].push_back(entry_to_json(e));
  store_manifest(dir, manifest);
  return e;
}

NafModel load_naf(const std::string& bank_dir, const std::string& id) {
  fs::path dir(bank_dir);
  nlohmann::json manifest = load_manifest(dir);
  for (const auto& j : manifest["entries"]) {
    if (j.at("id").get<std::string>() != id) continue;
    BankEntry e = entry_from_json(j);
    std::ifstream in(dir / e.file, std::ios::binary);
    require(in.good(), Errc::io_error,
            "cannot read weight blob: " + (dir / e.file).string());
    std::stringstream ss;
    ss << in.rdbuf();
    std::string blob = ss.str();
    uint32_t crc = crc32_bytes((const uint8_t*)blob.data(), blob.size());
    require(crc == e.checksum, Errc::io_error,
            "checksum mismatch for bank entry " + id);
    NafConfig cfg = e.config.get<NafConfig>();
    NafModel model = NafModel::init(cfg);
    decode_blob(blob, model);
    model.has_dynamics = e.has_dynamics;
    return model;
  }
  raise(Errc::not_found, "no bank entry with id " + id);
}

std::vector<BankEntry> list_bank(const std::string& bank_dir) {
  nlohmann::json manifest = load_manifest(bank_dir);
  std::vector<BankEntry> out;
  for (const auto& j : manifest["entries"]) out.push_back(entry_from_json(j));
  return out;
}

BankEntry retrieve(const std::string& bank_dir, const std::string& narration,
                   const VecX<float>& descriptor) {
  std::vector<BankEntry> entries = list_bank(bank_dir);
  require(!entries.empty(), Errc::not_found, "the bank is empty");
  std::set<std::string> q = tokenize(narration);
  int best = 0;
  double best_score = -1.0;
  for (int i = 0; i < (int)entries.size(); ++i) {
    double s = 0.5 * jaccard(q, tokenize(entries[i].narration)) +
               0.5 * cosine(descriptor, entries[i].mean_descriptor);
    if (s > best_score ||
        (s == best_score && entries[i].id < entries[best].id)) {
      best_score = s;
      best = i;
    }
  }
  return entries[best];
}

}  // namespace naf
