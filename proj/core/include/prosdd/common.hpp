#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace prosdd {

// Row-major so that frame t is a contiguous row; all persisted layouts are
// row-major binary32 LE.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

constexpr int kSampleRate = 16000;
constexpr int kUtteranceSamples = 64000;   // 4 s
constexpr int kFrameLength = 400;          // 25 ms
constexpr int kFrameHop = 320;             // 20 ms
constexpr int kNumFrames = 200;
constexpr int kSpeakerDim = 192;
constexpr int kProsodyDim = 256;
constexpr int kTargetDim = kSpeakerDim + kProsodyDim;  // 448

// Thrown for malformed or inconsistent data (bad files, wrong shapes,
// impossible configurations). CLI maps this to exit code 2.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Thrown when a verification step (grad check, invariant) fails.
// CLI maps this to exit code 3.
class VerificationError : public std::runtime_error {
 public:
  explicit VerificationError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace prosdd
