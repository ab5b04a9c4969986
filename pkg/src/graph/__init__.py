"""Knowledge graph: ontology, DKG construction, storage and queries"""
