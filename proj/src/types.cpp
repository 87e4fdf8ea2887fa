#include "vigil/types.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace vigil {

namespace {

constexpr std::array<std::string_view, kBehaviorCount> kBehaviorNames = {
    "head_up", "grazing", "walking", "running", "standing", "other", "unknown"};

constexpr double kBoxSlack = 1e-9;

}  // namespace

std::string_view to_string(BehaviorLabel label) {
  return kBehaviorNames[static_cast<std::size_t>(label)];
}

std::optional<BehaviorLabel> parse_behavior(std::string_view text) {
  for (std::size_t i = 0; i < kBehaviorNames.size(); ++i) {
    if (kBehaviorNames[i] == text) return kAllBehaviors[i];
  }
  return std::nullopt;
}

bool BoundingBox::inside_unit_square() const {
  return w > 0.0 && h > 0.0 && x >= 0.0 && y >= 0.0 && x + w <= 1.0 + kBoxSlack &&
         y + h <= 1.0 + kBoxSlack;
}

BehaviorWeights::BehaviorWeights() {
  weights_[static_cast<std::size_t>(BehaviorLabel::head_up)] = 1.0;
}

BehaviorWeights BehaviorWeights::zeros() {
  BehaviorWeights w;
  w.weights_.fill(0.0);
  return w;
}

void BehaviorWeights::set(BehaviorLabel label, double weight) {
  if (!(weight >= 0.0 && weight <= 1.0)) {
    throw std::invalid_argument("behavior weight for " + std::string(to_string(label)) +
                                " must lie in [0,1]");
  }
  if (label == BehaviorLabel::unknown && weight != 0.0) {
    throw std::invalid_argument("weight for 'unknown' is fixed at 0");
  }
  weights_[static_cast<std::size_t>(label)] = weight;
}

double BehaviorWeights::max() const {
  return *std::max_element(weights_.begin(), weights_.end());
}

void validate(const VigilanceConfig& config) {
  if (!(config.theta_s >= kMinThetaS && config.theta_s <= kMaxThetaS)) {
    throw std::invalid_argument("theta_S must lie in [0.1, 0.9]");
  }
  if (!(config.theta_c > 0.0 && config.theta_c < 1.0)) {
    throw std::invalid_argument("theta_c must lie in (0, 1)");
  }
  if (config.theta_q && !(*config.theta_q > 0.0 && *config.theta_q < 1.0)) {
    throw std::invalid_argument("theta_q must lie in (0, 1)");
  }
  if (config.debounce_frames < 1) {
    throw std::invalid_argument("debounce_frames must be positive");
  }
  if (!(config.yellow_factor > 0.0 && config.yellow_factor <= 1.0)) {
    throw std::invalid_argument("yellow_factor must lie in (0, 1]");
  }
  if (config.escalation_persist_ms < 0) {
    throw std::invalid_argument("escalation_persist_ms must be non-negative");
  }
}

std::string_view to_string(DegradeReason reason) {
  switch (reason) {
    case DegradeReason::none: return "none";
    case DegradeReason::no_detections: return "no_detections";
    case DegradeReason::low_confidence: return "low_confidence";
    case DegradeReason::backend_failure: return "backend_failure";
  }
  return "none";
}

std::string_view to_string(AlertLevel level) {
  switch (level) {
    case AlertLevel::green: return "GREEN";
    case AlertLevel::yellow: return "YELLOW";
    case AlertLevel::red: return "RED";
    case AlertLevel::red_escalated: return "RED_ESCALATED";
    case AlertLevel::no_detections: return "NO_DETECTIONS";
  }
  return "GREEN";
}

std::optional<AlertLevel> parse_alert_level(std::string_view text) {
  for (auto level : {AlertLevel::green, AlertLevel::yellow, AlertLevel::red,
                     AlertLevel::red_escalated, AlertLevel::no_detections}) {
    if (to_string(level) == text) return level;
  }
  return std::nullopt;
}

}  // namespace vigil
