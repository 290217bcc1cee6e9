#pragma once

#include "fox/common.hpp"
#include "fox/config.hpp"
#include "fox/counting.hpp"
#include "fox/env.hpp"
#include "fox/fnet.hpp"
#include "fox/formation.hpp"
#include "fox/nn.hpp"
#include "fox/qlearn.hpp"
#include "fox/rewards.hpp"
#include "fox/trainer.hpp"
#include "fox/verify.hpp"
