#pragma once

#include "lore/baselines.hpp"
#include "lore/config.hpp"
#include "lore/evaluation.hpp"
#include "lore/io.hpp"
#include "lore/math.hpp"
#include "lore/optimizer.hpp"
#include "lore/parallel.hpp"
#include "lore/policy_basis.hpp"
#include "lore/rng.hpp"
#include "lore/synth.hpp"
#include "lore/trainer.hpp"
#include "lore/types.hpp"
