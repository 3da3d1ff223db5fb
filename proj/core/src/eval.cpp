#include "prosdd/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "prosdd/common.hpp"

namespace prosdd {

namespace {

struct Curves {
  std::vector<double> far, frr;  // per threshold, thresholds ascending
};

Curves sweep(const std::vector<TrialScore>& scores) {
  std::vector<double> bona, spoof;
  for (const auto& s : scores) {
    if (!std::isfinite(s.score)) throw DataError("non-finite trial score: " + s.trial_id);
    (s.label == Label::bonafide ? bona : spoof).push_back(s.score);
  }
  if (bona.empty() || spoof.empty()) {
    throw DataError("EER needs at least one bona fide and one spoof trial");
  }
  std::set<double> distinct(bona.begin(), bona.end());
  distinct.insert(spoof.begin(), spoof.end());
  std::vector<double> thresholds;
  thresholds.push_back(-std::numeric_limits<double>::infinity());
  thresholds.insert(thresholds.end(), distinct.begin(), distinct.end());
  thresholds.push_back(std::numeric_limits<double>::infinity());

  Curves c;
  for (double t : thresholds) {
    const double frr =
        double(std::count_if(bona.begin(), bona.end(), [&](double s) { return s < t; })) /
        double(bona.size());
    const double far =
        double(std::count_if(spoof.begin(), spoof.end(), [&](double s) { return s >= t; })) /
        double(spoof.size());
    c.far.push_back(far);
    c.frr.push_back(frr);
  }
  return c;
}

}  // namespace

double compute_eer(const std::vector<TrialScore>& scores) {
  const Curves c = sweep(scores);
  for (size_t i = 0; i + 1 < c.far.size(); ++i) {
    const double d0 = c.far[i] - c.frr[i];
    const double d1 = c.far[i + 1] - c.frr[i + 1];
    if (d0 >= 0.0 && d1 <= 0.0) {
      if (d0 == d1) return c.frr[i];
      const double lambda = d0 / (d0 - d1);
      return c.frr[i] + lambda * (c.frr[i + 1] - c.frr[i]);
    }
  }
  throw DataError("EER crossing not found (should be unreachable)");
}

std::vector<std::pair<double, double>> det_points(const std::vector<TrialScore>& scores) {
  const Curves c = sweep(scores);
  std::vector<std::pair<double, double>> pts(c.far.size());
  for (size_t i = 0; i < c.far.size(); ++i) pts[i] = {c.far[i], c.frr[i]};
  return pts;
}

std::map<AttackFamily, double> per_attack_report(const std::vector<TrialScore>& scores) {
  std::vector<TrialScore> bona;
  std::map<AttackFamily, std::vector<TrialScore>> by_family;
  for (const auto& s : scores) {
    if (s.label == Label::bonafide) {
      bona.push_back(s);
    } else {
      by_family[s.attack_family].push_back(s);
    }
  }
  if (bona.empty()) throw DataError("per-attack report needs bona fide trials");
  std::map<AttackFamily, double> report;
  for (auto& [family, spoofs] : by_family) {
    std::vector<TrialScore> subset = bona;
    subset.insert(subset.end(), spoofs.begin(), spoofs.end());
    report[family] = compute_eer(subset);
  }
  return report;
}

void write_scores(const std::vector<TrialScore>& scores, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write score file: " + path.string());
  f << "# prosdd-scores v1 polarity=bonafide-high\n";
  char buf[64];
  for (const auto& s : scores) {
    std::snprintf(buf, sizeof(buf), "%.9g", s.score);
    f << s.trial_id << '\t' << to_string(s.label) << '\t' << to_string(s.attack_family) << '\t'
      << buf << '\n';
  }
}

std::vector<TrialScore> read_scores(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read score file: " + path.string());
  std::string line;
  if (!std::getline(f, line) || line.rfind("# prosdd-scores v1", 0) != 0) {
    throw DataError("bad score file header: " + path.string());
  }
  std::vector<TrialScore> scores;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string id, label, attack, score;
    if (!std::getline(ss, id, '\t') || !std::getline(ss, label, '\t') ||
        !std::getline(ss, attack, '\t') || !std::getline(ss, score, '\t')) {
      throw DataError("malformed score line: " + line);
    }
    scores.push_back({id, label_from_string(label), attack_from_string(attack),
                      std::stod(score)});
  }
  return scores;
}

}  // namespace prosdd
