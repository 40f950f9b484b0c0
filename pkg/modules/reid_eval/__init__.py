from .evaluator import CMCCurve, FeatureMatrix, cmc, extract_features, rank_gallery
