#pragma once

// Persisted channel datasets: header (profile, grid shape, count, SNR list,
// seed) followed by (ideal, noisy, snr_db) records as interleaved (re, im)
// float32, with a CRC32 trailer.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pilotforge/channel.hpp"
#include "pilotforge/common.hpp"
#include "pilotforge/grid.hpp"

namespace pilotforge::sim {

inline constexpr char kDatasetMagic[4] = {'P', 'F', 'D', 'S'};
inline constexpr std::uint32_t kDatasetVersion = 1;

struct DatasetHeader {
  ChannelProfile profile;
  int nf = 72;
  int nn = 14;
  std::uint32_t count = 0;
  std::vector<float> snr_list_db;
  std::uint64_t seed = 0;
};

struct ChannelRecord {
  ComplexGrid ideal;
  ComplexGrid noisy;
  float snr_db = 0.0f;
};

struct ChannelDataset {
  DatasetHeader header;
  std::vector<ChannelRecord> records;

  void validate() const {
    if (records.size() != header.count)
      throw RunError("dataset: record count does not match header");
    for (const auto& r : records) {
      bool known = false;
      for (float s : header.snr_list_db) known = known || s == r.snr_db;
      if (!known) throw RunError("dataset: record SNR not in header list");
    }
  }
};

// Deterministic per-record seeding: record i of a split starting at
// base_index uses frame seed mix64(seed, base_index + i); SNRs cycle over
// the list. Frame generation is index-parallel, assembly order is fixed.
inline ChannelDataset generate_dataset(const ChannelProfile& profile, int count,
                                       const std::vector<float>& snr_list_db,
                                       std::uint64_t seed, std::uint64_t base_index = 0,
                                       int nf = 72, int nn = 14) {
  profile.validate();
  if (count <= 0) throw ValidationError("generate_dataset: count must be positive");
  if (snr_list_db.empty()) throw ValidationError("generate_dataset: SNR list is empty");
  ChannelDataset ds;
  ds.header.profile = profile;
  ds.header.nf = nf;
  ds.header.nn = nn;
  ds.header.count = static_cast<std::uint32_t>(count);
  ds.header.snr_list_db = snr_list_db;
  ds.header.seed = seed;
  ds.records.resize(count);
  parallel_for(count, [&](std::int64_t i) {
    const std::uint64_t frame_seed = mix64(seed, base_index + std::uint64_t(i));
    ChannelRecord& r = ds.records[i];
    r.ideal = generate_channel(profile, frame_seed, nf, nn);
    r.snr_db = snr_list_db[std::size_t(i) % snr_list_db.size()];
    r.noisy = add_awgn(r.ideal, r.snr_db, mix64(frame_seed, 1));
  });
  return ds;
}

inline void save_dataset(const std::filesystem::path& path, const ChannelDataset& ds) {
  ByteWriter w;
  w.bytes(kDatasetMagic, 4);
  w.u32(kDatasetVersion);
  const ChannelProfile& p = ds.header.profile;
  w.u32(static_cast<std::uint32_t>(p.tap_delays_s.size()));
  for (double d : p.tap_delays_s) w.f64(d);
  for (double d : p.tap_powers_db) w.f64(d);
  w.f64(p.carrier_hz);
  w.f64(p.spacing_hz);
  w.f64(p.symbol_s);
  w.f64(p.speed_mps);
  w.u32(static_cast<std::uint32_t>(ds.header.nf));
  w.u32(static_cast<std::uint32_t>(ds.header.nn));
  w.u32(ds.header.count);
  w.u32(static_cast<std::uint32_t>(ds.header.snr_list_db.size()));
  for (float s : ds.header.snr_list_db) w.f32(s);
  w.u64(ds.header.seed);
  for (const auto& r : ds.records) {
    for (const auto& v : r.ideal.values) {
      w.f32(v.real());
      w.f32(v.imag());
    }
    for (const auto& v : r.noisy.values) {
      w.f32(v.real());
      w.f32(v.imag());
    }
    w.f32(r.snr_db);
  }
  try {
    w.write_file_with_crc(path);
  } catch (const RunError& e) {
    throw RunError(std::string("dataset write failed: ") + e.what());
  }
}

inline ChannelDataset load_dataset(const std::filesystem::path& path) {
  ByteReader r = ByteReader::from_file_checked(path);
  char magic[4];
  for (auto& c : magic) c = static_cast<char>(r.u8());
  if (std::memcmp(magic, kDatasetMagic, 4) != 0)
    throw RunError("not a dataset file: " + path.string());
  if (r.u32() != kDatasetVersion)
    throw RunError("unsupported dataset version: " + path.string());
  ChannelDataset ds;
  ChannelProfile& p = ds.header.profile;
  const std::uint32_t taps = r.u32();
  p.tap_delays_s.resize(taps);
  p.tap_powers_db.resize(taps);
  for (auto& d : p.tap_delays_s) d = r.f64();
  for (auto& d : p.tap_powers_db) d = r.f64();
  p.carrier_hz = r.f64();
  p.spacing_hz = r.f64();
  p.symbol_s = r.f64();
  p.speed_mps = r.f64();
  ds.header.nf = static_cast<int>(r.u32());
  ds.header.nn = static_cast<int>(r.u32());
  ds.header.count = r.u32();
  ds.header.snr_list_db.resize(r.u32());
  for (auto& s : ds.header.snr_list_db) s = r.f32();
  ds.header.seed = r.u64();
  ds.records.resize(ds.header.count);
  for (auto& rec : ds.records) {
    rec.ideal = ComplexGrid(ds.header.nf, ds.header.nn);
    rec.noisy = ComplexGrid(ds.header.nf, ds.header.nn);
    for (auto& v : rec.ideal.values) {
      const float re = r.f32(), im = r.f32();
      v = {re, im};
    }
    for (auto& v : rec.noisy.values) {
      const float re = r.f32(), im = r.f32();
      v = {re, im};
    }
    rec.snr_db = r.f32();
  }
  ds.validate();
  return ds;
}

}  // namespace pilotforge::sim
