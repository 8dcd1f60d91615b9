#pragma once

// Everything except the HTTP backends (ttp/openai.hpp).

#include "ttp/chat.hpp"
#include "ttp/classifier.hpp"
#include "ttp/corpus.hpp"
#include "ttp/corpus_io.hpp"
#include "ttp/embedding.hpp"
#include "ttp/error.hpp"
#include "ttp/evaluation.hpp"
#include "ttp/extraction.hpp"
#include "ttp/flat_index.hpp"
#include "ttp/page_cache.hpp"
#include "ttp/pipeline.hpp"
#include "ttp/prompt.hpp"
#include "ttp/remote.hpp"
#include "ttp/retrieval.hpp"
#include "ttp/tactic.hpp"
#include "ttp/text.hpp"
