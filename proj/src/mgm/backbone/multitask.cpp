// Copyright 2026 the MGM authors
// SPDX-License-Identifier: Apache-2.0
#include "mgm/backbone/multitask.hpp"

namespace mgm::backbone {

TaskSpec make_task_spec(const std::string& name, int c_obj, double depth_min,
                        double depth_max) {
  TaskSpec spec;
  spec.name = name;
  spec.depth_scale = 1.0 / (depth_max - depth_min);
  if (name == "seg") {
    spec.kind = TaskKind::kSeg;
    spec.output_channels = c_obj + 1;
    spec.loss = LossKind::kCrossEntropy;
  } else if (name == "depth") {
    spec.kind = TaskKind::kDepth;
    spec.output_channels = 1;
    spec.loss = LossKind::kL1;
  } else if (name == "normal") {
    spec.kind = TaskKind::kNormal;
    spec.output_channels = 3;
    spec.loss = LossKind::kCosine;
  } else if (name == "edge") {
    spec.kind = TaskKind::kEdge;
    spec.output_channels = 1;
    spec.loss = LossKind::kBce;
  } else {
    throw ConfigError("unknown task name: " + name);
  }
  return spec;
}

}  // namespace mgm::backbone
