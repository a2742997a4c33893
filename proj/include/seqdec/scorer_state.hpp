#pragma once

#include <memory>
#include <typeinfo>

namespace seqdec {

/// Opaque per-hypothesis state owned by one scorer.
///
/// States are immutable values behind a shared pointer, so copying a
/// hypothesis never deep-copies a scorer cache. Equality compares the
/// wrapped values and exists mainly for tests.
class ScorerState {
 public:
  ScorerState() = default;

  template <typename T>
  static ScorerState make(T value) {
    ScorerState s;
    s.impl_ = std::make_shared<const Model<T>>(std::move(value));
    return s;
  }

  bool empty() const { return impl_ == nullptr; }

  template <typename T>
  const T& get() const {
    auto* m = dynamic_cast<const Model<T>*>(impl_.get());
    if (m == nullptr) throw std::bad_cast();
    return m->value;
  }

  friend bool operator==(const ScorerState& a, const ScorerState& b) {
    if (a.impl_ == b.impl_) return true;
    if (!a.impl_ || !b.impl_) return false;
    return a.impl_->equals(*b.impl_);
  }

 private:
  struct Concept {
    virtual ~Concept() = default;
    virtual bool equals(const Concept& other) const = 0;
  };

  template <typename T>
  struct Model final : Concept {
    explicit Model(T v) : value(std::move(v)) {}
    bool equals(const Concept& other) const override {
      auto* o = dynamic_cast<const Model<T>*>(&other);
      return o != nullptr && o->value == value;
    }
    T value;
  };

  std::shared_ptr<const Concept> impl_;
};

}  // namespace seqdec
