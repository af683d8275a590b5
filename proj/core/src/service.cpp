#include "pei/service.hpp"

#include <stdexcept>
#include <string>

#include "pei/errors.hpp"

namespace pei {

std::string_view to_string(OutputMode mode) { return mode == OutputMode::Hard ? "hard" : "soft"; }

OutputMode parse_output_mode(std::string_view tag) {
  if (tag == "hard") return OutputMode::Hard;
  if (tag == "soft") return OutputMode::Soft;
  throw std::invalid_argument("unknown output mode '" + std::string(tag) + "'");
}

ServiceInstance::ServiceInstance(std::string name, std::shared_ptr<const Encoder> encoder,
                                 std::shared_ptr<const DownstreamHead> head, OutputMode widest_mode,
                                 std::optional<InputTransform> transform)
    : name_(std::move(name)),
      encoder_(std::move(encoder)),
      head_(std::move(head)),
      widest_mode_(widest_mode),
      transform_(std::move(transform)) {
  if (!encoder_ || !head_) throw std::invalid_argument("ServiceInstance: null encoder or head");
  if (head_->input_dim() != encoder_->embedding_dim()) {
    throw std::invalid_argument("ServiceInstance: head input does not match embedding dim");
  }
}

mlp::Matrix<float> ServiceInstance::logits_unmetered(std::span<const ImageTensor> batch) const {
  std::vector<ImageTensor> transformed;
  std::span<const ImageTensor> inputs = batch;
  if (transform_) {
    transformed.reserve(batch.size());
    for (const auto& x : batch) transformed.push_back(transform_->apply(x));
    inputs = transformed;
  }
  const ImageShape native = encoder_->input_shape();
  for (const auto& x : inputs) {
    if (x.shape() != native) {
      throw std::invalid_argument("service " + name_ + ": expected " + native.to_string() + ", got " +
                                  x.shape().to_string());
    }
  }
  return head_->logits_batch(embedding_matrix(*encoder_, inputs));
}

std::vector<BehaviorValue> ServiceInstance::predict(std::span<const ImageTensor> batch, OutputMode mode) {
  if (mode == OutputMode::Soft && widest_mode_ == OutputMode::Hard) {
    throw PermissionDenied("service " + name_ + " only returns hard labels");
  }
  const auto logits = logits_unmetered(batch);
  queries_.fetch_add(batch.size());
  std::vector<BehaviorValue> out;
  out.reserve(batch.size());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    if (mode == OutputMode::Hard) {
      Eigen::Index idx = 0;
      logits.row(r).maxCoeff(&idx);
      out.emplace_back(HardLabel{static_cast<int>(idx)});
    } else {
      out.emplace_back(SoftLogits{std::vector<float>(logits.row(r).data(), logits.row(r).data() + logits.cols())});
    }
  }
  return out;
}

}  // namespace pei
