#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pei/behavior.hpp"
#include "pei/encoder.hpp"
#include "pei/head.hpp"

namespace pei {

enum class OutputMode { Hard, Soft };

std::string_view to_string(OutputMode mode);
OutputMode parse_output_mode(std::string_view tag);

/// The targeted downstream API g: images in, behaviors out, every image
/// metered.
class TargetService {
 public:
  virtual ~TargetService() = default;
  virtual const std::string& name() const = 0;
  virtual std::size_t classes() const = 0;
  /// Hard mode returns HardLabel (top-1), soft mode returns SoftLogits.
  /// Throws pei::PermissionDenied when soft output is not offered and
  /// std::invalid_argument on shape mismatch (nothing is billed then).
  virtual std::vector<BehaviorValue> predict(std::span<const ImageTensor> batch, OutputMode mode) = 0;
  virtual std::uint64_t queries() const = 0;
  virtual OutputMode widest_mode() const = 0;
};

/// Preprocessing applied by the service owner before encoding.
struct InputTransform {
  std::string description;
  std::function<ImageTensor(const ImageTensor&)> apply;
};

/// g = h o f, optionally preceded by an input transform.
class ServiceInstance final : public TargetService {
 public:
  ServiceInstance(std::string name, std::shared_ptr<const Encoder> encoder,
                  std::shared_ptr<const DownstreamHead> head, OutputMode widest_mode,
                  std::optional<InputTransform> transform = std::nullopt);

  const std::string& name() const override { return name_; }
  std::size_t classes() const override { return head_->classes(); }
  std::vector<BehaviorValue> predict(std::span<const ImageTensor> batch, OutputMode mode) override;
  std::uint64_t queries() const override { return queries_.load(); }

  OutputMode widest_mode() const override { return widest_mode_; }

  /// Owner-side evaluation: same pipeline as predict, not metered.
  mlp::Matrix<float> logits_unmetered(std::span<const ImageTensor> batch) const;
  const std::shared_ptr<const Encoder>& encoder() const noexcept { return encoder_; }
  const std::shared_ptr<const DownstreamHead>& head() const noexcept { return head_; }
  const std::optional<InputTransform>& transform() const noexcept { return transform_; }
  /// Shape the encoder expects after any transform.
  ImageShape native_shape() const { return encoder_->input_shape(); }

 private:
  std::string name_;
  std::shared_ptr<const Encoder> encoder_;
  std::shared_ptr<const DownstreamHead> head_;
  OutputMode widest_mode_;
  std::optional<InputTransform> transform_;
  std::atomic<std::uint64_t> queries_{0};
};

inline std::vector<BehaviorValue> service_predict(TargetService& service,
                                                  std::span<const ImageTensor> batch,
                                                  OutputMode mode) {
  return service.predict(batch, mode);
}

}  // namespace pei
