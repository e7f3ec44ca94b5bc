/*
 * Copyright 2026 The EDS Workbench Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Umbrella header. The HTTP front end lives in eds/http_server.hpp and is
// not included here.

#ifndef EDS_EDS_HPP_
#define EDS_EDS_HPP_

#include "eds/annotation.hpp"
#include "eds/corpus.hpp"
#include "eds/discovery.hpp"
#include "eds/error.hpp"
#include "eds/ground_truth.hpp"
#include "eds/metrics.hpp"
#include "eds/robustness.hpp"
#include "eds/service.hpp"
#include "eds/synthetic.hpp"

#endif  // EDS_EDS_HPP_
