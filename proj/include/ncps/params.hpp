#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ncps/error.hpp"

namespace ncps {

/// Parameter groups; each model registers into exactly one.
inline constexpr const char* kSurfaceGroup = "surface";
inline constexpr const char* kBrdfGroup = "brdf";
inline constexpr const char* kCcmGroup = "ccm";

struct ArrayInfo {
  std::string group;
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// Named parameter arrays packed into one contiguous buffer, so gradients,
/// optimizer moments and checkpoints all share a single flat layout.
template <typename T>
class ParamStore {
 public:
  using value_type = T;

  /// Registers a zero-initialized array and returns its id.
  std::size_t add(std::string group, std::string name, std::vector<int> shape) {
    if (frozen_) throw ConfigError("parameter store is frozen; cannot add '" + name + "'");
    std::size_t n = 1;
    for (int d : shape) {
      if (d <= 0) throw ConfigError("parameter '" + name + "' has a non-positive dimension");
      n *= std::size_t(d);
    }
    ArrayInfo info{std::move(group), std::move(name), std::move(shape), data_.size(), n};
    data_.resize(data_.size() + n, T(0));
    arrays_.push_back(std::move(info));
    return arrays_.size() - 1;
  }

  /// After freezing the parameter count is fixed.
  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }

  std::span<T> values(std::size_t id) { return {data_.data() + arrays_[id].offset, arrays_[id].size}; }
  std::span<const T> values(std::size_t id) const {
    return {data_.data() + arrays_[id].offset, arrays_[id].size};
  }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::size_t size() const { return data_.size(); }
  std::vector<T>& flat() { return data_; }
  const std::vector<T>& flat() const { return data_; }

  const std::vector<ArrayInfo>& arrays() const { return arrays_; }
  const ArrayInfo& info(std::size_t id) const { return arrays_[id]; }

  /// Returns the id of the named array; throws DataError if absent.
  std::size_t find(const std::string& group, const std::string& name) const {
    for (std::size_t i = 0; i < arrays_.size(); ++i)
      if (arrays_[i].group == group && arrays_[i].name == name) return i;
    throw DataError("parameter '" + group + "/" + name + "' not found");
  }

  /// Number of scalars registered under a group.
  std::size_t group_size(const std::string& group) const {
    std::size_t n = 0;
    for (const ArrayInfo& a : arrays_)
      if (a.group == group) n += a.size;
    return n;
  }

  bool all_finite() const {
    for (const T& x : data_)
      if (!std::isfinite(x)) return false;
    return true;
  }

  /// Throws DivergenceError naming the first array holding a non-finite value.
  void check_finite() const {
    for (const ArrayInfo& a : arrays_)
      for (std::size_t i = 0; i < a.size; ++i)
        if (!std::isfinite(data_[a.offset + i]))
          throw DivergenceError("non-finite parameter in " + a.group + "/" + a.name);
  }

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const ArrayInfo& a : arrays_) out.add(a.group, a.name, a.shape);
    for (std::size_t i = 0; i < data_.size(); ++i) out.flat()[i] = U(data_[i]);
    if (frozen_) out.freeze();
    return out;
  }

 private:
  std::vector<T> data_;
  std::vector<ArrayInfo> arrays_;
  bool frozen_ = false;
};

}  // namespace ncps
