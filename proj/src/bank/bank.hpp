#pragma once

#include <cstdint>
#include <json.hpp>
#include <string>
#include <vector>

#include "field/model.hpp"

namespace naf {

struct BankEntry {
  std::string id;
  std::string narration;
  std::string file;     // weight blob path, relative to the bank directory
  std::string created;  // UTC timestamp
  uint32_t checksum = 0;
  bool has_dynamics = false;
  VecX<float> mean_descriptor;
  nlohmann::json config;
};

uint32_t crc32_bytes(const uint8_t* data, size_t n);

// Serializes the model into <bank_dir>/<id>.naf (magic "NAF1", version,
// per-segment name/dims/float32 LE payload) and appends the entry to
// manifest.json via write-temp-rename.  The manifest stays untouched if the
// blob write fails.
BankEntry save_naf(const NafModel& model, const std::string& narration,
                   const std::string& bank_dir, const std::string& id);

NafModel load_naf(const std::string& bank_dir, const std::string& id);

std::vector<BankEntry> list_bank(const std::string& bank_dir);

// Highest 0.5*narration-Jaccard + 0.5*descriptor-cosine; ties by id.
BankEntry retrieve(const std::string& bank_dir, const std::string& narration,
                   const VecX<float>& descriptor);

}  // namespace naf
