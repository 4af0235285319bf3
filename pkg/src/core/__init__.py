# Accumulation, reports and method ranking