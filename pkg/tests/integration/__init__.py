# Integration tests package