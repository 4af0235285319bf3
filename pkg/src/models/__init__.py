# Data models and errors for segmentation evaluation