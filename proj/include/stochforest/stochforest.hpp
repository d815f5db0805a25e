#ifndef STOCHFOREST_STOCHFOREST_HPP_
#define STOCHFOREST_STOCHFOREST_HPP_

#include "stochforest/errors.hpp"
#include "stochforest/rng.hpp"
#include "stochforest/data.hpp"
#include "stochforest/tree.hpp"
#include "stochforest/leaf_models.hpp"
#include "stochforest/forest_sampler.hpp"
#include "stochforest/random_effects.hpp"
#include "stochforest/model_common.hpp"
#include "stochforest/bart.hpp"
#include "stochforest/bcf.hpp"
#include "stochforest/serialization.hpp"
#include "stochforest/dgp.hpp"
#include "stochforest/recipes.hpp"

#endif  // STOCHFOREST_STOCHFOREST_HPP_
