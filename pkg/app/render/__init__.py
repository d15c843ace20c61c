"""
Программный растеризатор и композитинг
"""
