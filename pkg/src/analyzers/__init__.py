# Metric computation over accumulated counts