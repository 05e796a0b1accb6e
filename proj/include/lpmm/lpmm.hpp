#pragma once

#include "lpmm/adaptor.hpp"
#include "lpmm/adaptor_io.hpp"
#include "lpmm/dataset.hpp"
#include "lpmm/error.hpp"
#include "lpmm/landmarks.hpp"
#include "lpmm/model.hpp"
#include "lpmm/model_io.hpp"
#include "lpmm/pose_edit.hpp"
#include "lpmm/surrogate.hpp"
#include "lpmm/training.hpp"
