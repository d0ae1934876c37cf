#pragma once

#include "leukopipe/nn/module.hpp"

namespace leukopipe::nn {

struct AdamOptions {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction. Buffers are never updated.
class Adam {
public:
    Adam(std::vector<Parameter*> params, AdamOptions opts);

    void zero_grad();
    void step();
    long steps() const { return t_; }

private:
    std::vector<Parameter*> params_;
    AdamOptions opts_;
    std::vector<std::vector<float>> m_, v_;
    long t_ = 0;
};

}  // namespace leukopipe::nn
