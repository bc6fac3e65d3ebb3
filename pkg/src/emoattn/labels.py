"""Fixed label orders shared by every file format and tensor layout."""

LABELS = (
    "anger", "anticipation", "disgust", "fear", "joy", "love",
    "optimism", "pessimism", "sadness", "surprise", "trust",
)
NUM_LABELS = len(LABELS)

NRC_CATEGORIES = (
    "anger", "anticipation", "disgust", "fear", "joy",
    "sadness", "surprise", "trust", "negative", "positive",
)
