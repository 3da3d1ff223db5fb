#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "prosdd/corpus.hpp"

namespace prosdd {

struct TrialScore {
  std::string trial_id;
  Label label = Label::bonafide;
  AttackFamily attack_family = AttackFamily::none;
  double score = 0.0;  // higher = more bona fide
};

// Interpolated EER: crossing of the piecewise-linear FAR/FRR curves over
// the threshold sweep. FRR(t) = P(bona score < t), FAR(t) = P(spoof score >= t).
double compute_eer(const std::vector<TrialScore>& scores);

// (FAR, FRR) operating points as the threshold rises; starts at (1, 0),
// ends at (0, 1).
std::vector<std::pair<double, double>> det_points(const std::vector<TrialScore>& scores);

// EER of each attack family present vs all bona fide trials.
std::map<AttackFamily, double> per_attack_report(const std::vector<TrialScore>& scores);

// `# prosdd-scores v1 polarity=bonafide-high` header, then TSV records.
void write_scores(const std::vector<TrialScore>& scores, const std::filesystem::path& path);
std::vector<TrialScore> read_scores(const std::filesystem::path& path);

}  // namespace prosdd
