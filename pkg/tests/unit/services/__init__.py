# Service unit tests package