/* Copyright 2026 The MVDeTr Toolkit Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Everything in one include.

#ifndef MVDETR_MVDETR_HPP_
#define MVDETR_MVDETR_HPP_

#include "mvdetr/augmentation.hpp"
#include "mvdetr/core.hpp"
#include "mvdetr/decode_eval.hpp"
#include "mvdetr/encoder.hpp"
#include "mvdetr/geometry.hpp"
#include "mvdetr/losses.hpp"
#include "mvdetr/sampler.hpp"
#include "mvdetr/serialization.hpp"
#include "mvdetr/shadow_attention.hpp"
#include "mvdetr/harness/config.hpp"
#include "mvdetr/harness/gradcheck.hpp"
#include "mvdetr/harness/model.hpp"
#include "mvdetr/harness/pipeline.hpp"
#include "mvdetr/harness/report.hpp"
#include "mvdetr/harness/scene.hpp"

#endif  // MVDETR_MVDETR_HPP_
