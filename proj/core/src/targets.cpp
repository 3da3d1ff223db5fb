#include "prosdd/targets.hpp"

#include <cstdio>
#include <cstring>
#include <vector>

namespace prosdd {

namespace {
constexpr char kMagic[4] = {'P', 'S', 'D', 'T'};
constexpr std::uint16_t kVersion = 1;
}  // namespace

ProsodicTargetSequence build_target_sequence(const std::string& utterance_id,
                                             const std::string& speaker_id,
                                             const Vec& speaker_emb, const Mat& prosody) {
  if (speaker_emb.size() != kSpeakerDim) throw DataError("speaker embedding must be 192-d");
  if (std::abs(speaker_emb.norm() - 1.0) > 1e-6) {
    throw DataError("speaker embedding must be unit norm");
  }
  if (prosody.rows() != kNumFrames || prosody.cols() != kProsodyDim) {
    throw DataError("prosody matrix must be 200x256");
  }
  ProsodicTargetSequence seq;
  seq.utterance_id = utterance_id;
  seq.speaker_id = speaker_id;
  seq.rows.resize(kNumFrames, kTargetDim);
  for (int t = 0; t < kNumFrames; ++t) {
    seq.rows.row(t).head(kSpeakerDim) = speaker_emb.transpose();
    seq.rows.row(t).tail(kProsodyDim) = prosody.row(t);
  }
  // quantize to binary32 so the in-memory sequence matches its cache exactly
  for (int t = 0; t < kNumFrames; ++t)
    for (int d = 0; d < kTargetDim; ++d) seq.rows(t, d) = float(seq.rows(t, d));
  return seq;
}

void write_cache(const ProsodicTargetSequence& seq, const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.string().c_str(), "wb");
  if (!f) throw DataError("cannot open target cache for write: " + path.string());
  std::fwrite(kMagic, 1, 4, f);
  std::fwrite(&kVersion, sizeof(kVersion), 1, f);
  const std::uint32_t T = std::uint32_t(seq.rows.rows());
  const std::uint32_t Ds = kSpeakerDim, Dp = kProsodyDim;
  std::fwrite(&T, 4, 1, f);
  std::fwrite(&Ds, 4, 1, f);
  std::fwrite(&Dp, 4, 1, f);
  const std::uint32_t id_len = std::uint32_t(seq.speaker_id.size());
  std::fwrite(&id_len, 4, 1, f);
  std::fwrite(seq.speaker_id.data(), 1, id_len, f);
  std::vector<float> row(kTargetDim);
  for (int t = 0; t < seq.rows.rows(); ++t) {
    for (int d = 0; d < kTargetDim; ++d) row[d] = float(seq.rows(t, d));
    std::fwrite(row.data(), 4, row.size(), f);
  }
  std::fclose(f);
}

ProsodicTargetSequence read_cache(const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.string().c_str(), "rb");
  if (!f) throw DataError("cannot open target cache: " + path.string());
  auto fail = [&](const std::string& msg) {
    std::fclose(f);
    throw DataError(msg + ": " + path.string());
  };
  char magic[4];
  if (std::fread(magic, 1, 4, f) != 4 || std::memcmp(magic, kMagic, 4) != 0) fail("bad magic");
  std::uint16_t version = 0;
  if (std::fread(&version, sizeof(version), 1, f) != 1 || version != kVersion)
    fail("unsupported version");
  std::uint32_t T = 0, Ds = 0, Dp = 0, id_len = 0;
  if (std::fread(&T, 4, 1, f) != 1 || std::fread(&Ds, 4, 1, f) != 1 ||
      std::fread(&Dp, 4, 1, f) != 1) {
    fail("truncated header");
  }
  if (Ds != kSpeakerDim || Dp != kProsodyDim) fail("dimension mismatch");
  if (std::fread(&id_len, 4, 1, f) != 1 || id_len > 4096) fail("truncated header");
  std::string speaker_id(id_len, '\0');
  if (id_len > 0 && std::fread(speaker_id.data(), 1, id_len, f) != id_len) fail("truncated header");

  ProsodicTargetSequence seq;
  seq.speaker_id = speaker_id;
  seq.utterance_id = path.stem().string();
  seq.rows.resize(T, Ds + Dp);
  std::vector<float> row(Ds + Dp);
  for (std::uint32_t t = 0; t < T; ++t) {
    if (std::fread(row.data(), 4, row.size(), f) != row.size()) fail("truncated");
    for (std::uint32_t d = 0; d < Ds + Dp; ++d) seq.rows(t, d) = row[d];
  }
  std::fclose(f);
  return seq;
}

}  // namespace prosdd
